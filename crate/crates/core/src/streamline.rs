//! Streamline representation and per-streamline geometry.
//!
//! A streamline is an ordered polyline of 3D world-space points (mm). This
//! module covers fixed-step resampling, truncation/padding to a fixed sample
//! count, total turning angle, the landmark shape descriptor and coordinate
//! normalization.

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Point3};
use ndarray::Array2;

/// Ordered polyline of at least two distinct 3D points.
#[derive(Debug, Clone, PartialEq)]
pub struct Streamline {
    points: Vec<Point3>,
}

impl Streamline {
    /// Validates and wraps a point sequence: at least two points, all
    /// coordinates finite, consecutive points distinct.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid(format!(
                "streamline needs >= 2 points, got {}",
                points.len()
            )));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite coordinate at point {i}"
                )));
            }
        }
        for i in 1..points.len() {
            if points[i] == points[i - 1] {
                return Err(Error::invalid(format!(
                    "zero-length segment between points {} and {}",
                    i - 1,
                    i
                )));
            }
        }
        Ok(Streamline { points })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Point3 {
        self.points[0]
    }

    pub fn last(&self) -> Point3 {
        *self.points.last().unwrap()
    }

    /// Total arc length (mm).
    pub fn total_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| geom::dist(w[0], w[1]))
            .sum()
    }

    /// Cumulative arc length at each vertex; `cum[0] == 0`.
    fn cumulative_lengths(&self) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.points.len());
        cum.push(0.0);
        for w in self.points.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + geom::dist(w[0], w[1]));
        }
        cum
    }

    /// Point at arc-length position `t` along the polyline (clamped to the end).
    fn point_at_arc(&self, cum: &[f64], cursor: &mut usize, t: f64) -> Point3 {
        let total = *cum.last().unwrap();
        if t >= total {
            return self.last();
        }
        while *cursor + 1 < cum.len() && cum[*cursor + 1] <= t {
            *cursor += 1;
        }
        let seg_len = cum[*cursor + 1] - cum[*cursor];
        let frac = if seg_len > 0.0 { (t - cum[*cursor]) / seg_len } else { 0.0 };
        geom::lerp(self.points[*cursor], self.points[*cursor + 1], frac)
    }

    pub fn apply_rigid(&self, t: &geom::RigidTransform) -> Streamline {
        Streamline {
            points: self.points.iter().map(|&p| t.apply(p)).collect(),
        }
    }
}

/// Resamples `s` to constant spacing `step`: every output point lies on the
/// piecewise-linear path of `s`, consecutive output points are exactly `step`
/// apart, and the exact final point of the polyline is always emitted as the
/// last sample (so the final interval may be shorter than `step`).
///
/// Each new sample is the first point along the remaining path at Euclidean
/// distance `step` from the previous sample, so recomputing the cumulative
/// arc length of the output reproduces multiples of `step`.
pub fn resample_fixed_step(s: &Streamline, step: f64) -> Result<Streamline> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    let pts = s.points();
    let eps = 1e-9 * step.max(s.total_length());
    let mut out = vec![pts[0]];
    let mut seg = 0usize; // current segment index
    let mut u = 0.0f64; // position within segment [0, 1)
    'outer: loop {
        let c = *out.last().unwrap();
        // find the first forward crossing of the sphere |x - c| = step
        let mut u_lo = u;
        for si in seg..pts.len() - 1 {
            let a = pts[si];
            let b = pts[si + 1];
            let e = geom::sub(b, a);
            let d = geom::sub(a, c);
            let ee = geom::dot(e, e);
            let de = geom::dot(d, e);
            let dd = geom::dot(d, d);
            let disc = de * de - ee * (dd - step * step);
            if disc >= 0.0 {
                // the distance along the segment starts below `step`, so the
                // first crossing going forward is the larger root
                let root = (-de + disc.sqrt()) / ee;
                if root >= u_lo && root <= 1.0 {
                    let p = geom::add(a, geom::scale(e, root));
                    // if the crossing coincides with the path end, stop here
                    if si == pts.len() - 2 && geom::dist(p, s.last()) < eps {
                        break 'outer;
                    }
                    out.push(p);
                    seg = si;
                    u = root;
                    continue 'outer;
                }
            }
            u_lo = 0.0;
        }
        break;
    }
    if geom::dist(*out.last().unwrap(), s.last()) > 0.0 {
        out.push(s.last());
    }
    Streamline::new(out)
}

/// Resamples to exactly `count` points equidistant in arc length, endpoints
/// included. Used for atlas prototypes and MDF comparisons.
pub fn resample_to_count(s: &Streamline, count: usize) -> Result<Streamline> {
    if count < 2 {
        return Err(Error::invalid(format!("count must be >= 2, got {count}")));
    }
    let cum = s.cumulative_lengths();
    let total = *cum.last().unwrap();
    let mut cursor = 0usize;
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let t = total * j as f64 / (count - 1) as f64;
        out.push(s.point_at_arc(&cum, &mut cursor, t));
    }
    out[count - 1] = s.last();
    Streamline::new(out)
}

/// Fixed-length sample buffer: the first `valid_len` entries are real samples,
/// the rest are all-zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampledStreamline {
    points: Vec<Point3>,
    valid_len: usize,
    step: f64,
}

impl ResampledStreamline {
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Real (non-padding) samples.
    pub fn real_samples(&self) -> &[Point3] {
        &self.points[..self.valid_len]
    }
}

/// Copies the first `min(len, n)` points of `s` into an `n`-point buffer and
/// zero-pads the remainder. `step` records the spacing `s` was resampled with.
pub fn truncate_pad(s: &Streamline, n: usize, step: f64) -> Result<ResampledStreamline> {
    if n < 2 {
        return Err(Error::invalid(format!("n must be >= 2, got {n}")));
    }
    let valid_len = s.len().min(n);
    let mut points = vec![[0.0; 3]; n];
    points[..valid_len].copy_from_slice(&s.points()[..valid_len]);
    Ok(ResampledStreamline { points, valid_len, step })
}

/// Resample at `step` then truncate/pad to `n` samples: the standard
/// preprocessing applied before descriptor extraction.
pub fn resample_truncate(s: &Streamline, step: f64, n: usize) -> Result<ResampledStreamline> {
    let r = resample_fixed_step(s, step)?;
    truncate_pad(&r, n, step)
}

/// Total turning of the polyline: the sum over interior vertices of the
/// unsigned angle between consecutive segment directions, in degrees.
/// Returns 0 for fewer than 3 points.
pub fn winding_angle_degrees(s: &Streamline) -> f64 {
    let pts = s.points();
    if pts.len() < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for w in pts.windows(3) {
        let u = geom::sub(w[1], w[0]);
        let v = geom::sub(w[2], w[1]);
        let nu = geom::norm(u);
        let nv = geom::norm(v);
        if nu == 0.0 || nv == 0.0 {
            continue;
        }
        let c = (geom::dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
        total += c.acos();
    }
    total.to_degrees()
}

/// K x N matrix of distances from K on-streamline landmarks to every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkDescriptor {
    values: Array2<f64>,
}

impl LandmarkDescriptor {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.nrows()
    }
}

/// Places `k` landmarks equidistant in arc length along the real samples of
/// `r` (first at sample 0, last at sample `valid_len - 1`) and returns the
/// k x N distance matrix. Padded columns are zero.
///
/// The descriptor is invariant under rigid transforms of the source
/// streamline, since only pairwise distances enter.
pub fn landmark_descriptor(r: &ResampledStreamline, k: usize) -> Result<LandmarkDescriptor> {
    if k < 2 {
        return Err(Error::invalid(format!("landmark count must be >= 2, got {k}")));
    }
    if r.valid_len() < 2 {
        return Err(Error::invalid("need at least 2 real samples".to_string()));
    }
    let real = Streamline::new(r.real_samples().to_vec())?;
    let landmarks = resample_to_count(&real, k)?;
    let mut values = Array2::zeros((k, r.n()));
    for (ki, &lm) in landmarks.points().iter().enumerate() {
        for (i, &p) in r.real_samples().iter().enumerate() {
            values[(ki, i)] = geom::dist(lm, p);
        }
    }
    Ok(LandmarkDescriptor { values })
}

/// Maps the real samples of `r` into [-1, 1] per axis via the affine map
/// sending `bbox.min -> -1` and `bbox.max -> +1`. Padded columns are exactly
/// zero. A real sample outside `bbox` is an error.
pub fn normalize_coordinates(r: &ResampledStreamline, bbox: &Aabb) -> Result<Array2<f64>> {
    if !bbox.has_positive_extent() {
        return Err(Error::invalid("bbox must have positive extent".to_string()));
    }
    let mut out = Array2::zeros((3, r.n()));
    for (i, &p) in r.real_samples().iter().enumerate() {
        if !bbox.contains(p) {
            return Err(Error::OutOfBounds(p[0], p[1], p[2]));
        }
        for a in 0..3 {
            out[(a, i)] = 2.0 * (p[a] - bbox.min[a]) / (bbox.max[a] - bbox.min[a]) - 1.0;
        }
    }
    Ok(out)
}
