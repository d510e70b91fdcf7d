//! Axis-aligned voxel volumes and sampling.
//!
//! Grids are axis-aligned (no rotation component). Voxel (0,0,0) is centered
//! at `origin`; voxel data is stored x-fastest, channel-interleaved, matching
//! the on-disk layout.

use crate::error::{Error, Result};
use crate::geom::{Aabb, Point3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeGrid {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl VolumeGrid {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid dims must be >= 1 per axis".to_string()));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("grid spacing must be positive".to_string()));
        }
        Ok(VolumeGrid { dims, spacing, origin })
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Continuous voxel coordinate of a world point: `(p - origin) / spacing`.
    pub fn world_to_voxel(&self, p: Point3) -> [f64; 3] {
        [
            (p[0] - self.origin[0]) / self.spacing[0],
            (p[1] - self.origin[1]) / self.spacing[1],
            (p[2] - self.origin[2]) / self.spacing[2],
        ]
    }

    /// World coordinate of a voxel center.
    pub fn voxel_center(&self, idx: [usize; 3]) -> Point3 {
        [
            self.origin[0] + idx[0] as f64 * self.spacing[0],
            self.origin[1] + idx[1] as f64 * self.spacing[1],
            self.origin[2] + idx[2] as f64 * self.spacing[2],
        ]
    }

    /// A point is in range when its continuous voxel coordinate lies in
    /// `[-0.5, dims - 0.5)` per axis.
    pub fn contains(&self, p: Point3) -> bool {
        let u = self.world_to_voxel(p);
        (0..3).all(|a| u[a] >= -0.5 && u[a] < self.dims[a] as f64 - 0.5)
    }

    /// Index of the voxel whose center is nearest to `p`, ties broken toward
    /// the lower voxel index. `None` when out of range.
    pub fn nearest_index(&self, p: Point3) -> Option<[usize; 3]> {
        if !self.contains(p) {
            return None;
        }
        let u = self.world_to_voxel(p);
        let mut idx = [0usize; 3];
        for a in 0..3 {
            // round-half-down so an exact tie goes to the lower index
            let i = (u[a] - 0.5).ceil();
            idx[a] = (i.max(0.0) as usize).min(self.dims[a] - 1);
        }
        Some(idx)
    }

    /// Flat index in x-fastest order.
    pub fn linear(&self, idx: [usize; 3]) -> usize {
        idx[0] + self.dims[0] * (idx[1] + self.dims[1] * idx[2])
    }

    /// World bounding box of the grid: the outer voxel edges, i.e. exactly the
    /// in-range region of `contains`.
    pub fn world_bbox(&self) -> Aabb {
        let mut min = [0.0; 3];
        let mut max = [0.0; 3];
        for a in 0..3 {
            min[a] = self.origin[a] - 0.5 * self.spacing[a];
            max[a] = self.origin[a] + (self.dims[a] as f64 - 0.5) * self.spacing[a];
        }
        Aabb::new(min, max)
    }

    /// Clamps a world point to the in-range region (half-voxel rim inside the
    /// outer edges). Used by the descriptor pipeline's border policy.
    pub fn clamp_point(&self, p: Point3) -> Point3 {
        let b = self.world_bbox();
        let mut q = p;
        for a in 0..3 {
            // strictly below the half-open upper bound
            let hi = b.max[a] - 1e-9 * self.spacing[a];
            q[a] = q[a].clamp(b.min[a], hi);
        }
        q
    }

    fn trilinear_setup(&self, p: Point3) -> Result<([usize; 3], [f64; 3])> {
        if !self.contains(p) {
            return Err(Error::OutOfBounds(p[0], p[1], p[2]));
        }
        let u = self.world_to_voxel(p);
        let mut i0 = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..3 {
            // clamped border: within the half-voxel rim the nearest border
            // voxel pair is used with the fraction clamped to [0, 1]
            let max_base = self.dims[a].saturating_sub(2);
            let f = u[a].floor();
            let base = (f.max(0.0) as usize).min(max_base);
            i0[a] = base;
            frac[a] = if self.dims[a] == 1 {
                0.0
            } else {
                (u[a] - base as f64).clamp(0.0, 1.0)
            };
        }
        Ok((i0, frac))
    }
}

/// Single-channel real-valued volume.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarVolume {
    pub grid: VolumeGrid,
    pub data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(grid: VolumeGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::ShapeMismatch(format!(
                "scalar volume expects {} voxels, got {}",
                grid.voxel_count(),
                data.len()
            )));
        }
        Ok(ScalarVolume { grid, data })
    }

    pub fn zeros(grid: VolumeGrid) -> Self {
        let n = grid.voxel_count();
        ScalarVolume { grid, data: vec![0.0; n] }
    }

    pub fn at(&self, idx: [usize; 3]) -> f64 {
        self.data[self.grid.linear(idx)]
    }
}

/// Real-valued volume with `channels` interleaved values per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelVolume {
    pub grid: VolumeGrid,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl MultiChannelVolume {
    pub fn new(grid: VolumeGrid, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::invalid("channel count must be >= 1".to_string()));
        }
        if data.len() != grid.voxel_count() * channels {
            return Err(Error::ShapeMismatch(format!(
                "multi-channel volume expects {} values, got {}",
                grid.voxel_count() * channels,
                data.len()
            )));
        }
        Ok(MultiChannelVolume { grid, channels, data })
    }

    pub fn zeros(grid: VolumeGrid, channels: usize) -> Self {
        let n = grid.voxel_count() * channels;
        MultiChannelVolume { grid, channels, data: vec![0.0; n] }
    }

    pub fn at(&self, idx: [usize; 3], channel: usize) -> f64 {
        self.data[self.grid.linear(idx) * self.channels + channel]
    }

    pub fn at_mut(&mut self, idx: [usize; 3], channel: usize) -> &mut f64 {
        let i = self.grid.linear(idx) * self.channels + channel;
        &mut self.data[i]
    }
}

/// Volume of nonnegative integer region labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub grid: VolumeGrid,
    pub data: Vec<u32>,
}

impl LabelVolume {
    pub fn new(grid: VolumeGrid, data: Vec<u32>) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::ShapeMismatch(format!(
                "label volume expects {} voxels, got {}",
                grid.voxel_count(),
                data.len()
            )));
        }
        Ok(LabelVolume { grid, data })
    }

    pub fn zeros(grid: VolumeGrid) -> Self {
        let n = grid.voxel_count();
        LabelVolume { grid, data: vec![0; n] }
    }

    pub fn at(&self, idx: [usize; 3]) -> u32 {
        self.data[self.grid.linear(idx)]
    }
}

/// Binary mask over a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskVolume {
    pub grid: VolumeGrid,
    pub data: Vec<bool>,
}

impl MaskVolume {
    pub fn new(grid: VolumeGrid, data: Vec<bool>) -> Result<Self> {
        if data.len() != grid.voxel_count() {
            return Err(Error::ShapeMismatch(format!(
                "mask volume expects {} voxels, got {}",
                grid.voxel_count(),
                data.len()
            )));
        }
        Ok(MaskVolume { grid, data })
    }

    pub fn empty(grid: VolumeGrid) -> Self {
        let n = grid.voxel_count();
        MaskVolume { grid, data: vec![false; n] }
    }

    pub fn from_labels(v: &LabelVolume) -> Self {
        MaskVolume {
            grid: v.grid,
            data: v.data.iter().map(|&l| l != 0).collect(),
        }
    }

    pub fn to_labels(&self) -> LabelVolume {
        LabelVolume {
            grid: self.grid,
            data: self.data.iter().map(|&b| u32::from(b)).collect(),
        }
    }

    pub fn at(&self, idx: [usize; 3]) -> bool {
        self.data[self.grid.linear(idx)]
    }

    pub fn set(&mut self, idx: [usize; 3], v: bool) {
        let i = self.grid.linear(idx);
        self.data[i] = v;
    }

    /// Nearest-voxel membership test; out-of-range points are not members.
    pub fn contains_point(&self, p: Point3) -> bool {
        match self.grid.nearest_index(p) {
            Some(idx) => self.at(idx),
            None => false,
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Dilates a mask with a Euclidean ball of `radius_mm` (world units, so the
/// structuring element respects anisotropic spacing).
pub fn dilate_mask(mask: &MaskVolume, radius_mm: f64) -> MaskVolume {
    if radius_mm <= 0.0 {
        return mask.clone();
    }
    let g = mask.grid;
    let reach = [
        (radius_mm / g.spacing[0]).floor() as i64,
        (radius_mm / g.spacing[1]).floor() as i64,
        (radius_mm / g.spacing[2]).floor() as i64,
    ];
    // precompute the ball offsets once
    let mut ball = Vec::new();
    for dz in -reach[2]..=reach[2] {
        for dy in -reach[1]..=reach[1] {
            for dx in -reach[0]..=reach[0] {
                let d2 = (dx as f64 * g.spacing[0]).powi(2)
                    + (dy as f64 * g.spacing[1]).powi(2)
                    + (dz as f64 * g.spacing[2]).powi(2);
                if d2 <= radius_mm * radius_mm {
                    ball.push([dx, dy, dz]);
                }
            }
        }
    }
    let mut out = MaskVolume::empty(g);
    for z in 0..g.dims[2] {
        for y in 0..g.dims[1] {
            for x in 0..g.dims[0] {
                if !mask.at([x, y, z]) {
                    continue;
                }
                for off in &ball {
                    let nx = x as i64 + off[0];
                    let ny = y as i64 + off[1];
                    let nz = z as i64 + off[2];
                    if nx >= 0
                        && ny >= 0
                        && nz >= 0
                        && (nx as usize) < g.dims[0]
                        && (ny as usize) < g.dims[1]
                        && (nz as usize) < g.dims[2]
                    {
                        out.set([nx as usize, ny as usize, nz as usize], true);
                    }
                }
            }
        }
    }
    out
}

/// Trilinear interpolation of a scalar volume at a world point. Out-of-range
/// points are an error; the half-voxel rim uses the clamped border value.
pub fn trilinear_sample(v: &ScalarVolume, p: Point3) -> Result<f64> {
    let (i0, f) = v.grid.trilinear_setup(p)?;
    let mut acc = 0.0;
    for (dz, wz) in [(0usize, 1.0 - f[2]), (1, f[2])] {
        for (dy, wy) in [(0usize, 1.0 - f[1]), (1, f[1])] {
            for (dx, wx) in [(0usize, 1.0 - f[0]), (1, f[0])] {
                let idx = [
                    (i0[0] + dx).min(v.grid.dims[0] - 1),
                    (i0[1] + dy).min(v.grid.dims[1] - 1),
                    (i0[2] + dz).min(v.grid.dims[2] - 1),
                ];
                acc += wx * wy * wz * v.at(idx);
            }
        }
    }
    Ok(acc)
}

/// Trilinear interpolation of every channel of a multi-channel volume,
/// writing into `out` (length must equal the channel count).
pub fn trilinear_sample_multi(v: &MultiChannelVolume, p: Point3, out: &mut [f64]) -> Result<()> {
    if out.len() != v.channels {
        return Err(Error::ShapeMismatch(format!(
            "output buffer has {} slots, volume has {} channels",
            out.len(),
            v.channels
        )));
    }
    let (i0, f) = v.grid.trilinear_setup(p)?;
    out.fill(0.0);
    for (dz, wz) in [(0usize, 1.0 - f[2]), (1, f[2])] {
        for (dy, wy) in [(0usize, 1.0 - f[1]), (1, f[1])] {
            for (dx, wx) in [(0usize, 1.0 - f[0]), (1, f[0])] {
                let w = wx * wy * wz;
                if w == 0.0 {
                    continue;
                }
                let idx = [
                    (i0[0] + dx).min(v.grid.dims[0] - 1),
                    (i0[1] + dy).min(v.grid.dims[1] - 1),
                    (i0[2] + dz).min(v.grid.dims[2] - 1),
                ];
                let base = v.grid.linear(idx) * v.channels;
                for (c, slot) in out.iter_mut().enumerate() {
                    *slot += w * v.data[base + c];
                }
            }
        }
    }
    Ok(())
}

/// Label of the voxel whose center is nearest to `p`, ties toward the lower
/// voxel index.
pub fn nearest_label(v: &LabelVolume, p: Point3) -> Result<u32> {
    match v.grid.nearest_index(p) {
        Some(idx) => Ok(v.at(idx)),
        None => Err(Error::OutOfBounds(p[0], p[1], p[2])),
    }
}

/// Affine rescale sending the global minimum to 0 and maximum to 1.
/// A constant volume is a degenerate input.
pub fn normalize_t1w(v: &ScalarVolume) -> Result<ScalarVolume> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in &v.data {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if !(hi > lo) {
        return Err(Error::DegenerateInput(
            "volume has fewer than 2 distinct values".to_string(),
        ));
    }
    let range = hi - lo;
    let data = v.data.iter().map(|&x| (x - lo) / range).collect();
    Ok(ScalarVolume { grid: v.grid, data })
}
