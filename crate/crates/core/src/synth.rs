//! Synthetic desk-scale fixtures: tube-shaped bundles around smooth
//! centerlines plus loops, deep-ending streamlines and off-bundle
//! distractors, with volumes, masks, atlas and region queries that the rule
//! supervisors reproduce exactly.
//!
//! Every generated streamline is verified against the four supervisors at
//! generation time (with geometric margins wide enough to survive the f32
//! coordinate quantization of the tractogram format), so the emitted ground
//! truth is reproduced deterministically by `run_supervisors` on the loaded
//! files.

use crate::dataset::{Dataset, SubjectData};
use crate::ensemble::compose;
use crate::error::{Error, Result};
use crate::geom::{self, Point3};
use crate::sh::ShCoefficients;
use crate::streamline::{resample_fixed_step, resample_to_count, winding_angle_degrees, Streamline};
use crate::supervisors::{
    mdf_distance, run_supervisors, AtlasBundle, BundleAtlas, BundleMaskSet, BundleMasks,
    RegionQuery, SupervisorContext, SupervisorVerdict,
};
use crate::volume::{
    dilate_mask, normalize_t1w, LabelVolume, MaskVolume, MultiChannelVolume, ScalarVolume,
    VolumeGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID_DIMS: [usize; 3] = [40, 40, 40];
const SPACING: f64 = 2.5;
const MASK_RADIUS: f64 = 11.0;
const PARCEL_RADIUS: f64 = 7.0;
const ENDPOINT_MASK_RADIUS: f64 = 13.0;
const MASK_EXTENSION: f64 = 12.0;
const THETA_MM: f64 = 5.0;
const PROTOTYPE_POINTS: usize = 32;
const DEEP_RADIUS: f64 = 10.0;
const VENTRICLE_RADIUS: f64 = 6.0;
const DEEP_LABEL: u32 = 7;
const VENTRICLE_LABEL: u32 = 8;
const SUBJECT_JITTER: f64 = 3.0;
const CURVE_SAMPLES: usize = 121;
const SH_CHANNELS_PER_SHELL: usize = 28; // basis_size(6)

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthConfig {
    pub subjects: usize,
    pub members_per_bundle: usize,
    pub wide_per_bundle: usize,
    pub bump_per_bundle: usize,
    pub edge_per_bundle: usize,
    pub loops: usize,
    pub deep_enders: usize,
    pub distractors: usize,
    pub loop_threshold_deg: f64,
    pub ventricle_dilation_mm: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            subjects: 5,
            members_per_bundle: 250,
            wide_per_bundle: 100,
            bump_per_bundle: 100,
            edge_per_bundle: 50,
            loops: 250,
            deep_enders: 150,
            distractors: 450,
            loop_threshold_deg: 360.0,
            ventricle_dilation_mm: 3.0,
        }
    }
}

impl SynthConfig {
    /// A miniature variant for unit tests.
    pub fn small() -> Self {
        SynthConfig {
            subjects: 1,
            members_per_bundle: 20,
            wide_per_bundle: 6,
            bump_per_bundle: 6,
            edge_per_bundle: 5,
            loops: 10,
            deep_enders: 8,
            distractors: 12,
            ..SynthConfig::default()
        }
    }

    pub fn streamlines_per_subject(&self) -> usize {
        3 * (self.members_per_bundle
            + self.wide_per_bundle
            + self.bump_per_bundle
            + self.edge_per_bundle)
            + self.loops
            + self.deep_enders
            + self.distractors
    }
}

#[derive(Debug, Clone)]
pub struct SynthSubject {
    pub name: String,
    pub t1w: ScalarVolume,
    pub sh: ShCoefficients,
    pub parc: LabelVolume,
    pub deep_wm: MaskVolume,
    /// Raw (undilated) ventricle mask as stored on disk.
    pub ventricles: MaskVolume,
    pub bundles: BundleMaskSet,
    pub atlas: BundleAtlas,
    pub tractogram: Vec<Streamline>,
    pub truth: Vec<SupervisorVerdict>,
}

#[derive(Debug, Clone)]
pub struct SynthFixture {
    pub subjects: Vec<SynthSubject>,
    pub queries: Vec<RegionQuery>,
    pub region_table: Vec<u32>,
    pub loop_threshold_deg: f64,
    pub ventricle_dilation_mm: f64,
    /// Measured agreement of each supervisor (TQ, RBX, TS, AIF) with the
    /// emitted ground truth.
    pub expected_agreement: [f64; 4],
}

impl SynthFixture {
    pub fn sh_channels(&self) -> usize {
        2 * SH_CHANNELS_PER_SHELL
    }

    /// Converts the fixture into the training dataset form (T1w normalized).
    pub fn to_dataset(&self) -> Result<Dataset> {
        let mut subjects = Vec::with_capacity(self.subjects.len());
        for s in &self.subjects {
            subjects.push(SubjectData {
                name: s.name.clone(),
                t1w: normalize_t1w(&s.t1w)?,
                sh: s.sh.clone(),
                parc: s.parc.clone(),
                streamlines: s.tractogram.clone(),
                verdicts: s.truth.clone(),
            });
        }
        Ok(Dataset { subjects, region_table: self.region_table.clone() })
    }
}

fn grid() -> VolumeGrid {
    VolumeGrid::new(GRID_DIMS, [SPACING; 3], [0.0; 3]).unwrap()
}

fn bezier(p: &[Point3; 4], t: f64) -> Point3 {
    let u = 1.0 - t;
    let mut out = [0.0; 3];
    for a in 0..3 {
        out[a] = u * u * u * p[0][a]
            + 3.0 * u * u * t * p[1][a]
            + 3.0 * u * t * t * p[2][a]
            + t * t * t * p[3][a];
    }
    out
}

const BASE_CURVES: [[Point3; 4]; 3] = [
    [[15.0, 20.0, 50.0], [40.0, 55.0, 50.0], [60.0, 55.0, 50.0], [85.0, 20.0, 50.0]],
    [[15.0, 75.0, 25.0], [42.0, 88.0, 35.0], [48.0, 58.0, 45.0], [85.0, 75.0, 55.0]],
    [[20.0, 25.0, 80.0], [45.0, 40.0, 88.0], [55.0, 40.0, 88.0], [80.0, 50.0, 75.0]],
];

/// Safe lateral bump axes per bundle (clear of the deep/ventricle zones and
/// the grid boundary).
const BUMP_AXES: [Point3; 3] = [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]];

struct SubjectGeometry {
    curves: [Vec<Point3>; 3],          // centerline polylines, t in [0, 1]
    extended: [Vec<Point3>; 3],        // centerline extended past both ends
    endpoints: [[Point3; 2]; 3],
    start_tangents: [Point3; 3],       // unit tangent pointing into the curve
    deep_center: Point3,
    vent_center: Point3,
}

fn jitter(rng: &mut ChaCha8Rng, p: Point3, amount: f64) -> Point3 {
    [
        p[0] + rng.random_range(-amount..amount),
        p[1] + rng.random_range(-amount..amount),
        p[2] + rng.random_range(-amount..amount),
    ]
}

fn build_geometry(rng: &mut ChaCha8Rng) -> SubjectGeometry {
    let mut curves: Vec<Vec<Point3>> = Vec::with_capacity(3);
    let mut extended: Vec<Vec<Point3>> = Vec::with_capacity(3);
    let mut endpoints = Vec::with_capacity(3);
    let mut start_tangents = Vec::with_capacity(3);
    for base in &BASE_CURVES {
        let ctrl: [Point3; 4] = [
            jitter(rng, base[0], SUBJECT_JITTER),
            jitter(rng, base[1], SUBJECT_JITTER),
            jitter(rng, base[2], SUBJECT_JITTER),
            jitter(rng, base[3], SUBJECT_JITTER),
        ];
        let pts: Vec<Point3> = (0..CURVE_SAMPLES)
            .map(|i| bezier(&ctrl, i as f64 / (CURVE_SAMPLES - 1) as f64))
            .collect();
        let t0 = {
            let d = geom::sub(pts[1], pts[0]);
            geom::scale(d, 1.0 / geom::norm(d))
        };
        let t1 = {
            let n = pts.len();
            let d = geom::sub(pts[n - 1], pts[n - 2]);
            geom::scale(d, 1.0 / geom::norm(d))
        };
        let mut ext = Vec::with_capacity(pts.len() + 2);
        ext.push(geom::add(pts[0], geom::scale(t0, -MASK_EXTENSION)));
        ext.extend(pts.iter().cloned());
        ext.push(geom::add(pts[pts.len() - 1], geom::scale(t1, MASK_EXTENSION)));
        endpoints.push([pts[0], pts[pts.len() - 1]]);
        start_tangents.push(t0);
        curves.push(pts);
        extended.push(ext);
    }
    let deep_center = jitter(rng, [50.0, 50.0, 12.0], SUBJECT_JITTER);
    let vent_center = jitter(rng, [50.0, 15.0, 85.0], SUBJECT_JITTER);
    SubjectGeometry {
        curves: curves.try_into().unwrap(),
        extended: extended.try_into().unwrap(),
        endpoints: endpoints.try_into().unwrap(),
        start_tangents: start_tangents.try_into().unwrap(),
        deep_center,
        vent_center,
    }
}

fn dist_to_polyline(p: Point3, line: &[Point3]) -> f64 {
    let mut best = f64::INFINITY;
    for w in line.windows(2) {
        let ab = geom::sub(w[1], w[0]);
        let denom = geom::dot(ab, ab);
        let t = if denom > 0.0 {
            (geom::dot(geom::sub(p, w[0]), ab) / denom).clamp(0.0, 1.0)
        } else {
            0.0
        };
        best = best.min(geom::dist(p, geom::add(w[0], geom::scale(ab, t))));
    }
    best
}

/// Rasterizes a tube mask around a polyline, visiting only voxels inside the
/// polyline's padded bounding box.
fn rasterize_tube(g: VolumeGrid, line: &[Point3], radius: f64) -> MaskVolume {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in line {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let mut mask = MaskVolume::empty(g);
    let idx_range = |a: usize| -> (usize, usize) {
        let min_i = ((lo[a] - radius - g.origin[a]) / g.spacing[a]).floor().max(0.0) as usize;
        let max_i = (((hi[a] + radius - g.origin[a]) / g.spacing[a]).ceil() as usize)
            .min(g.dims[a] - 1);
        (min_i, max_i)
    };
    let (x0, x1) = idx_range(0);
    let (y0, y1) = idx_range(1);
    let (z0, z1) = idx_range(2);
    for z in z0..=z1 {
        for y in y0..=y1 {
            for x in x0..=x1 {
                let c = g.voxel_center([x, y, z]);
                if dist_to_polyline(c, line) <= radius {
                    mask.set([x, y, z], true);
                }
            }
        }
    }
    mask
}

fn rasterize_ball(g: VolumeGrid, center: Point3, radius: f64) -> MaskVolume {
    rasterize_tube(g, &[center, geom::add(center, [1e-9, 0.0, 0.0])], radius)
}

/// Smooth pseudo-random trigonometric field.
struct SmoothField {
    terms: Vec<(f64, Point3, f64, f64)>, // amplitude, direction, wavelength, phase
    offset: f64,
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng, offset: f64, amplitude: f64, terms: usize) -> Self {
        let terms = (0..terms)
            .map(|_| {
                let dir = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let n = geom::norm(dir).max(1e-6);
                (
                    rng.random_range(0.4..1.0) * amplitude,
                    geom::scale(dir, 1.0 / n),
                    rng.random_range(25.0..70.0),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        SmoothField { terms, offset }
    }

    fn at(&self, p: Point3) -> f64 {
        let mut v = self.offset;
        for (a, dir, lambda, phase) in &self.terms {
            v += a * (std::f64::consts::TAU * geom::dot(p, *dir) / lambda + phase).sin();
        }
        v
    }
}

fn build_volumes(
    rng: &mut ChaCha8Rng,
    geo: &SubjectGeometry,
) -> (ScalarVolume, ShCoefficients, LabelVolume, MaskVolume, MaskVolume) {
    let g = grid();
    let t1w_field = SmoothField::new(rng, 500.0, 130.0, 3);
    let mut t1w = ScalarVolume::zeros(g);
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let i = g.linear([x, y, z]);
                t1w.data[i] = t1w_field.at(g.voxel_center([x, y, z]));
            }
        }
    }
    let channels = 2 * SH_CHANNELS_PER_SHELL;
    let fields: Vec<SmoothField> = (0..channels)
        .map(|c| {
            let amp = 1.0 / (1.0 + c as f64 / 8.0);
            SmoothField::new(rng, 0.0, amp, 2)
        })
        .collect();
    let mut shv = MultiChannelVolume::zeros(g, channels);
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                let p = g.voxel_center([x, y, z]);
                let base = g.linear([x, y, z]) * channels;
                for (c, f) in fields.iter().enumerate() {
                    shv.data[base + c] = f.at(p);
                }
            }
        }
    }
    let sh = ShCoefficients {
        volume: shv,
        lmax: 6,
        shells: vec![1000.0, 3000.0],
        condition_estimate: 1.0,
    };

    let deep = rasterize_ball(g, geo.deep_center, DEEP_RADIUS);
    let vent = rasterize_ball(g, geo.vent_center, VENTRICLE_RADIUS);
    let mut parc = LabelVolume::zeros(g);
    for (bi, eps) in geo.endpoints.iter().enumerate() {
        for (ei, &center) in eps.iter().enumerate() {
            let ball = rasterize_ball(g, center, PARCEL_RADIUS);
            let label = (2 * bi + ei + 1) as u32;
            for (i, &inside) in ball.data.iter().enumerate() {
                if inside {
                    parc.data[i] = label;
                }
            }
        }
    }
    for (i, &inside) in deep.data.iter().enumerate() {
        if inside {
            parc.data[i] = DEEP_LABEL;
        }
    }
    for (i, &inside) in vent.data.iter().enumerate() {
        if inside {
            parc.data[i] = VENTRICLE_LABEL;
        }
    }
    (t1w, sh, parc, deep, vent)
}

fn build_masks(geo: &SubjectGeometry) -> Result<BundleMaskSet> {
    let g = grid();
    let mut bundles = Vec::with_capacity(3);
    for bi in 0..3 {
        let mask = rasterize_tube(g, &geo.extended[bi], MASK_RADIUS);
        let e0 = rasterize_ball(g, geo.endpoints[bi][0], ENDPOINT_MASK_RADIUS);
        let e1 = rasterize_ball(g, geo.endpoints[bi][1], ENDPOINT_MASK_RADIUS);
        bundles.push(BundleMasks::new(format!("bundle{bi}"), mask, e0, e1)?);
    }
    Ok(BundleMaskSet { bundles })
}

fn build_atlas(geo: &SubjectGeometry) -> Result<BundleAtlas> {
    let mut bundles = Vec::with_capacity(3);
    for bi in 0..3 {
        let proto = resample_to_count(&Streamline::new(geo.curves[bi].clone())?, PROTOTYPE_POINTS)?;
        bundles.push(AtlasBundle {
            name: format!("bundle{bi}"),
            prototypes: vec![proto],
            theta_mm: THETA_MM,
        });
    }
    Ok(BundleAtlas { bundles })
}

pub fn standard_queries() -> Vec<RegionQuery> {
    (0..3)
        .map(|bi| RegionQuery {
            name: format!("bundle{bi}"),
            endpoint_a: [2 * bi as u32 + 1].into_iter().collect(),
            endpoint_b: [2 * bi as u32 + 2].into_iter().collect(),
            require_traversal: Default::default(),
            exclude: [DEEP_LABEL, VENTRICLE_LABEL].into_iter().collect(),
        })
        .collect()
}

/// Quantizes coordinates to f32 so rule outcomes are identical before and
/// after the tractogram file round-trip.
fn quantize(points: Vec<Point3>) -> Vec<Point3> {
    points
        .into_iter()
        .map(|p| [p[0] as f32 as f64, p[1] as f32 as f64, p[2] as f32 as f64])
        .collect()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = geom::norm(v);
        if n > 1e-3 && n <= 1.0 {
            return geom::scale(v, 1.0 / n);
        }
    }
}

/// Tube streamline around a centerline: endpoint offsets o0/o1, optional
/// sinusoidal wobble, an optional mid-curve bump along `bump_axis`, and an
/// optional backward overshoot at the start.
#[allow(clippy::too_many_arguments)]
fn tube_streamline(
    curve: &[Point3],
    o0: Point3,
    o1: Point3,
    wobble_dir: Point3,
    wobble_amp: f64,
    wobble_cycles: f64,
    bump: Option<(Point3, f64)>,
    overshoot: Option<(Point3, f64)>,
) -> Vec<Point3> {
    let n = curve.len();
    let mut out = Vec::with_capacity(n + 8);
    if let Some((tangent, depth)) = overshoot {
        // walk in from the overshoot point toward the curve start
        let start = geom::add(curve[0], geom::scale(tangent, -depth));
        for k in 0..4 {
            let t = k as f64 / 4.0;
            out.push(geom::lerp(start, curve[0], t));
        }
    }
    for (i, &c) in curve.iter().enumerate() {
        let t = i as f64 / (n - 1) as f64;
        let mut offset = geom::lerp(o0, o1, t);
        let w = wobble_amp * (std::f64::consts::TAU * wobble_cycles * t).sin();
        offset = geom::add(offset, geom::scale(wobble_dir, w));
        if let Some((axis, magnitude)) = bump {
            // smooth window centered at t = 0.5
            let window = (-((t - 0.5) / 0.08).powi(2)).exp();
            offset = geom::add(offset, geom::scale(axis, magnitude * window));
        }
        out.push(geom::add(c, offset));
    }
    out
}

struct Generator<'a> {
    rng: ChaCha8Rng,
    geo: &'a SubjectGeometry,
    ctx: SupervisorContext<'a>,
    bbox: crate::geom::Aabb,
}

impl<'a> Generator<'a> {
    /// Whole-streamline checks shared by every category: finite, inside the
    /// volume with margin, and the intended verdict reproduced by the actual
    /// supervisors.
    fn accept(&self, points: Vec<Point3>, intended: &str) -> Option<(Streamline, SupervisorVerdict)> {
        let points = quantize(points);
        let s = Streamline::new(points).ok()?;
        let margin = 1.0;
        for p in s.points() {
            for a in 0..3 {
                if p[a] < self.bbox.min[a] + margin || p[a] > self.bbox.max[a] - margin {
                    return None;
                }
            }
        }
        let verdict = run_supervisors(&s, &self.ctx).ok()?;
        (compose(&verdict).code() == intended).then_some((s, verdict))
    }

    fn mdf_to_prototypes(&self, s: &Streamline) -> Vec<f64> {
        let rs = resample_to_count(s, PROTOTYPE_POINTS).unwrap();
        self.ctx
            .atlas
            .bundles
            .iter()
            .map(|b| {
                b.prototypes
                    .iter()
                    .map(|p| mdf_distance(&rs, p).unwrap())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    fn try_n<T>(&mut self, tries: usize, what: &str, mut f: impl FnMut(&mut Self) -> Option<T>) -> Result<T> {
        for _ in 0..tries {
            if let Some(v) = f(self) {
                return Ok(v);
            }
        }
        Err(Error::invalid(format!(
            "fixture generation failed to produce a valid {what} streamline"
        )))
    }

    fn member(&mut self, bundle: usize) -> Result<(Streamline, SupervisorVerdict)> {
        self.try_n(60, "member", |g| {
            let o0 = geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..3.5));
            let o1 = geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..3.5));
            let wdir = random_unit(&mut g.rng);
            let amp = g.rng.random_range(0.0..1.0);
            let cycles = g.rng.random_range(1.0..2.5);
            let pts = tube_streamline(&g.geo.curves[bundle], o0, o1, wdir, amp, cycles, None, None);
            let s = Streamline::new(quantize(pts.clone())).ok()?;
            // margin: comfortably within the atlas threshold
            if g.mdf_to_prototypes(&s)[bundle] > THETA_MM - 0.5 {
                return None;
            }
            g.accept(pts, "pppp")
        })
    }

    fn wide_member(&mut self, bundle: usize) -> Result<(Streamline, SupervisorVerdict)> {
        self.try_n(60, "wide member", |g| {
            let dir = random_unit(&mut g.rng);
            let m = g.rng.random_range(7.8..8.6);
            let curve = &g.geo.curves[bundle];
            let n = curve.len();
            let pts: Vec<Point3> = curve
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let t = i as f64 / (n - 1) as f64;
                    let mag = m * (std::f64::consts::PI * t).sin().powf(0.7);
                    geom::add(c, geom::scale(dir, mag))
                })
                .collect();
            let s = Streamline::new(quantize(pts.clone())).ok()?;
            let d = g.mdf_to_prototypes(&s)[bundle];
            // outside the atlas threshold with margin, still inside the mask
            if d < THETA_MM + 0.5 {
                return None;
            }
            g.accept(pts, "pnpp")
        })
    }

    fn bump_member(&mut self, bundle: usize) -> Result<(Streamline, SupervisorVerdict)> {
        self.try_n(60, "bump member", |g| {
            let o0 = geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..2.5));
            let o1 = geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..2.5));
            let sign = if g.rng.random_range(0.0..1.0) < 0.5 && bundle != 2 { -1.0 } else { 1.0 };
            let axis = geom::scale(BUMP_AXES[bundle], sign);
            let magnitude = g.rng.random_range(15.0..17.0);
            let pts = tube_streamline(
                &g.geo.curves[bundle],
                o0,
                o1,
                [0.0, 0.0, 0.0],
                0.0,
                1.0,
                Some((axis, magnitude)),
                None,
            );
            let s = Streamline::new(quantize(pts.clone())).ok()?;
            if g.mdf_to_prototypes(&s)[bundle] > THETA_MM - 0.5 {
                return None;
            }
            g.accept(pts, "ppnp")
        })
    }

    fn edge_ender(&mut self, bundle: usize) -> Result<(Streamline, SupervisorVerdict)> {
        self.try_n(60, "edge ender", |g| {
            let o0 = geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..1.5));
            let o1 = geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..2.5));
            let depth = g.rng.random_range(9.5..10.5);
            let pts = tube_streamline(
                &g.geo.curves[bundle],
                o0,
                o1,
                [0.0, 0.0, 0.0],
                0.0,
                1.0,
                None,
                Some((g.geo.start_tangents[bundle], depth)),
            );
            let s = Streamline::new(quantize(pts.clone())).ok()?;
            if g.mdf_to_prototypes(&s)[bundle] > THETA_MM - 0.5 {
                return None;
            }
            g.accept(pts, "npnp")
        })
    }

    fn looper(&mut self) -> Result<(Streamline, SupervisorVerdict)> {
        self.try_n(60, "looper", |g| {
            let center = [
                g.rng.random_range(24.0..74.0),
                g.rng.random_range(24.0..74.0),
                g.rng.random_range(24.0..74.0),
            ];
            let u = random_unit(&mut g.rng);
            let mut v = geom::cross(u, random_unit(&mut g.rng));
            let nv = geom::norm(v);
            if nv < 1e-3 {
                return None;
            }
            v = geom::scale(v, 1.0 / nv);
            let r0 = g.rng.random_range(6.0..10.0);
            let growth = 0.3;
            let sweep_deg = g.rng.random_range(460..640);
            let pts: Vec<Point3> = (0..=sweep_deg)
                .step_by(4)
                .map(|k| {
                    let th = (k as f64).to_radians();
                    let r = r0 + growth * th;
                    geom::add(
                        center,
                        geom::add(
                            geom::scale(u, r * th.cos()),
                            geom::scale(v, r * th.sin()),
                        ),
                    )
                })
                .collect();
            let s = Streamline::new(quantize(pts.clone())).ok()?;
            // margin over the loop threshold after 1 mm resampling
            let r1 = resample_fixed_step(&s, 1.0).ok()?;
            if winding_angle_degrees(&r1) < g.ctx.loop_threshold_deg + 40.0 {
                return None;
            }
            g.accept(pts, "nnnn")
        })
    }

    fn deep_ender(&mut self) -> Result<(Streamline, SupervisorVerdict)> {
        self.try_n(60, "deep ender", |g| {
            let dir = random_unit(&mut g.rng);
            let start = geom::add(
                g.geo.deep_center,
                geom::scale(dir, g.rng.random_range(26.0..38.0)),
            );
            let end = geom::add(
                g.geo.deep_center,
                geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..6.0)),
            );
            let mid = geom::add(
                geom::lerp(start, end, 0.5),
                geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..8.0)),
            );
            let pts: Vec<Point3> = (0..40)
                .map(|i| {
                    let t = i as f64 / 39.0;
                    let u = 1.0 - t;
                    [
                        u * u * start[0] + 2.0 * u * t * mid[0] + t * t * end[0],
                        u * u * start[1] + 2.0 * u * t * mid[1] + t * t * end[1],
                        u * u * start[2] + 2.0 * u * t * mid[2] + t * t * end[2],
                    ]
                })
                .collect();
            g.accept(pts, "nnnn")
        })
    }

    fn distractor(&mut self) -> Result<(Streamline, SupervisorVerdict)> {
        self.try_n(60, "distractor", |g| {
            let rand_pt = |g: &mut Self| {
                [
                    g.rng.random_range(14.0..84.0),
                    g.rng.random_range(14.0..84.0),
                    g.rng.random_range(14.0..84.0),
                ]
            };
            let p0 = rand_pt(g);
            let p3 = rand_pt(g);
            if geom::dist(p0, p3) < 35.0 {
                return None;
            }
            let p1 = geom::add(
                geom::lerp(p0, p3, 0.33),
                geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..14.0)),
            );
            let p2 = geom::add(
                geom::lerp(p0, p3, 0.67),
                geom::scale(random_unit(&mut g.rng), g.rng.random_range(0.0..14.0)),
            );
            let ctrl = [p0, p1, p2, p3];
            let pts: Vec<Point3> = (0..70)
                .map(|i| bezier(&ctrl, i as f64 / 69.0))
                .collect();
            let s = Streamline::new(quantize(pts.clone())).ok()?;
            // keep a margin to the atlas threshold so quantization is inert
            if g.mdf_to_prototypes(&s).iter().any(|&d| d < THETA_MM + 1.0) {
                return None;
            }
            g.accept(pts, "nnnp")
        })
    }
}

/// Generates the full synthetic fixture: per subject, volumes, masks, atlas,
/// tractogram and verified ground-truth verdicts.
pub fn synth_fixture(cfg: &SynthConfig, seed: u64) -> Result<SynthFixture> {
    if cfg.subjects == 0 {
        return Err(Error::invalid("need at least one subject".to_string()));
    }
    let queries = standard_queries();
    let region_table: Vec<u32> = (1..=8).collect();
    let mut subjects = Vec::with_capacity(cfg.subjects);
    for si in 0..cfg.subjects {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive(seed, &[si as u64]));
        let geo = build_geometry(&mut rng);
        let (t1w, sh, parc, deep, vent) = build_volumes(&mut rng, &geo);
        let bundles = build_masks(&geo)?;
        let atlas = build_atlas(&geo)?;
        let ventricle_zone = dilate_mask(&vent, cfg.ventricle_dilation_mm);
        let ctx = SupervisorContext {
            deep_wm: &deep,
            ventricle_zone: &ventricle_zone,
            masks: &bundles,
            parc: &parc,
            queries: &queries,
            atlas: &atlas,
            loop_threshold_deg: cfg.loop_threshold_deg,
            resample_step: 1.0,
        };
        let mut generator = Generator {
            rng: ChaCha8Rng::seed_from_u64(crate::seed::derive(seed, &[si as u64, 1])),
            geo: &geo,
            ctx,
            bbox: grid().world_bbox(),
        };
        let mut tractogram = Vec::with_capacity(cfg.streamlines_per_subject());
        let mut truth = Vec::with_capacity(cfg.streamlines_per_subject());
        let push = |t: &mut Vec<Streamline>, v: &mut Vec<SupervisorVerdict>,
                        item: (Streamline, SupervisorVerdict)| {
            t.push(item.0);
            v.push(item.1);
        };
        for bundle in 0..3 {
            for _ in 0..cfg.members_per_bundle {
                let item = generator.member(bundle)?;
                push(&mut tractogram, &mut truth, item);
            }
            for _ in 0..cfg.wide_per_bundle {
                let item = generator.wide_member(bundle)?;
                push(&mut tractogram, &mut truth, item);
            }
            for _ in 0..cfg.bump_per_bundle {
                let item = generator.bump_member(bundle)?;
                push(&mut tractogram, &mut truth, item);
            }
            for _ in 0..cfg.edge_per_bundle {
                let item = generator.edge_ender(bundle)?;
                push(&mut tractogram, &mut truth, item);
            }
        }
        for _ in 0..cfg.loops {
            let item = generator.looper()?;
            push(&mut tractogram, &mut truth, item);
        }
        for _ in 0..cfg.deep_enders {
            let item = generator.deep_ender()?;
            push(&mut tractogram, &mut truth, item);
        }
        for _ in 0..cfg.distractors {
            let item = generator.distractor()?;
            push(&mut tractogram, &mut truth, item);
        }
        subjects.push(SynthSubject {
            name: format!("subject{si:03}"),
            t1w,
            sh,
            parc,
            deep_wm: deep,
            ventricles: vent,
            bundles,
            atlas,
            tractogram,
            truth,
        });
    }
    // measured agreement of the supervisors with the emitted ground truth
    let mut agree = [0usize; 4];
    let mut total = 0usize;
    for s in &subjects {
        let ventricle_zone = dilate_mask(&s.ventricles, cfg.ventricle_dilation_mm);
        let ctx = SupervisorContext {
            deep_wm: &s.deep_wm,
            ventricle_zone: &ventricle_zone,
            masks: &s.bundles,
            parc: &s.parc,
            queries: &queries,
            atlas: &s.atlas,
            loop_threshold_deg: cfg.loop_threshold_deg,
            resample_step: 1.0,
        };
        for (streamline, expect) in s.tractogram.iter().zip(&s.truth) {
            let got = run_supervisors(streamline, &ctx)?;
            for (b, (g, e)) in got.labels().iter().zip(expect.labels()).enumerate() {
                if *g == e {
                    agree[b] += 1;
                }
            }
            total += 1;
        }
    }
    let expected_agreement = agree.map(|a| a as f64 / total as f64);
    Ok(SynthFixture {
        subjects,
        queries,
        region_table,
        loop_threshold_deg: cfg.loop_threshold_deg,
        ventricle_dilation_mm: cfg.ventricle_dilation_mm,
        expected_agreement,
    })
}
