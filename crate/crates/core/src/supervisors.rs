//! Rule-based streamline supervisors.
//!
//! Each supervisor emits one binary plausibility label per streamline:
//!
//! * `aif_label` flags loops (total turning above a threshold) and endpoints
//!   inside deep white matter or a ventricle zone;
//! * `maskrule_label` requires full containment in a bundle mask plus
//!   endpoints in the bundle's endpoint masks (either assignment order);
//! * `region_query_label` checks endpoint / traversal / exclusion region
//!   constraints against a parcellation;
//! * `atlas_label` accepts streamlines within an MDF distance threshold of a
//!   bundle prototype.
//!
//! All mask and parcellation membership tests use nearest-voxel lookup.
//! Supervisors are pure given immutable masks and atlases.

use crate::error::{Error, Result};
use crate::geom::Point3;
use crate::streamline::{
    resample_fixed_step, resample_to_count, winding_angle_degrees, ResampledStreamline,
    Streamline,
};
use crate::volume::{nearest_label, LabelVolume, MaskVolume};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryLabel {
    Positive,
    Negative,
}

impl BinaryLabel {
    pub fn from_bool(positive: bool) -> Self {
        if positive {
            BinaryLabel::Positive
        } else {
            BinaryLabel::Negative
        }
    }

    pub fn is_positive(self) -> bool {
        self == BinaryLabel::Positive
    }

    pub fn code(self) -> char {
        match self {
            BinaryLabel::Positive => 'p',
            BinaryLabel::Negative => 'n',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'p' => Some(BinaryLabel::Positive),
            'n' => Some(BinaryLabel::Negative),
            _ => None,
        }
    }
}

/// The four per-streamline binary labels in (TQ, RBX, TS, AIF) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SupervisorVerdict {
    pub tq: BinaryLabel,
    pub rbx: BinaryLabel,
    pub ts: BinaryLabel,
    pub aif: BinaryLabel,
}

impl SupervisorVerdict {
    pub fn new(tq: BinaryLabel, rbx: BinaryLabel, ts: BinaryLabel, aif: BinaryLabel) -> Self {
        SupervisorVerdict { tq, rbx, ts, aif }
    }

    pub fn labels(&self) -> [BinaryLabel; 4] {
        [self.tq, self.rbx, self.ts, self.aif]
    }
}

/// One bundle's segmentation mask and endpoint masks; all three share a grid.
#[derive(Debug, Clone)]
pub struct BundleMasks {
    pub name: String,
    pub mask: MaskVolume,
    pub endpoints: [MaskVolume; 2],
}

impl BundleMasks {
    pub fn new(name: String, mask: MaskVolume, ep0: MaskVolume, ep1: MaskVolume) -> Result<Self> {
        if mask.grid != ep0.grid || mask.grid != ep1.grid {
            return Err(Error::invalid(format!(
                "bundle {name}: mask and endpoint masks must share one grid"
            )));
        }
        Ok(BundleMasks { name, mask, endpoints: [ep0, ep1] })
    }
}

/// Full mask-rule supervisor input: one `BundleMasks` per bundle.
#[derive(Debug, Clone, Default)]
pub struct BundleMaskSet {
    pub bundles: Vec<BundleMasks>,
}

/// Endpoint / traversal / exclusion constraints over parcellation region ids.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RegionQuery {
    pub name: String,
    /// Admissible region ids for one endpoint.
    pub endpoint_a: BTreeSet<u32>,
    /// Admissible region ids for the other endpoint.
    pub endpoint_b: BTreeSet<u32>,
    /// Regions that must each be visited by at least one sample.
    #[serde(default)]
    pub require_traversal: BTreeSet<u32>,
    /// Regions no sample may visit.
    #[serde(default)]
    pub exclude: BTreeSet<u32>,
}

impl RegionQuery {
    pub fn validate(&self) -> Result<()> {
        if self.endpoint_a.is_empty() || self.endpoint_b.is_empty() {
            return Err(Error::invalid(format!(
                "query {}: endpoint sets must be non-empty",
                self.name
            )));
        }
        Ok(())
    }
}

/// Prototype streamlines and an acceptance distance per bundle.
#[derive(Debug, Clone)]
pub struct AtlasBundle {
    pub name: String,
    /// All prototypes share the point count of the first.
    pub prototypes: Vec<Streamline>,
    /// MDF acceptance threshold in mm (inclusive).
    pub theta_mm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BundleAtlas {
    pub bundles: Vec<AtlasBundle>,
}

impl BundleAtlas {
    pub fn validate(&self) -> Result<()> {
        for b in &self.bundles {
            if b.prototypes.is_empty() {
                return Err(Error::invalid(format!("atlas bundle {} has no prototypes", b.name)));
            }
            if !(b.theta_mm > 0.0) {
                return Err(Error::invalid(format!(
                    "atlas bundle {}: theta must be positive",
                    b.name
                )));
            }
            let p = b.prototypes[0].len();
            if b.prototypes.iter().any(|s| s.len() != p) {
                return Err(Error::invalid(format!(
                    "atlas bundle {}: prototypes must share one point count",
                    b.name
                )));
            }
        }
        Ok(())
    }

    /// Point count of the atlas prototypes (they all agree after validate).
    pub fn prototype_points(&self) -> Option<usize> {
        self.bundles.first().map(|b| b.prototypes[0].len())
    }
}

/// Anatomy-inspired filter. Negative iff the total turning of the streamline
/// (computed on its 1 mm-resampled form) exceeds `loop_threshold_deg`, or
/// either endpoint lies (nearest-voxel) inside the deep-white-matter mask or
/// the ventricle zone. An endpoint outside the grid counts as negative.
pub fn aif_label(
    s: &Streamline,
    deep_wm: &MaskVolume,
    ventricle_zone: &MaskVolume,
    loop_threshold_deg: f64,
) -> BinaryLabel {
    let winding = match resample_fixed_step(s, 1.0) {
        Ok(r) => winding_angle_degrees(&r),
        Err(_) => winding_angle_degrees(s),
    };
    if winding > loop_threshold_deg {
        return BinaryLabel::Negative;
    }
    for &endpoint in &[s.first(), s.last()] {
        if !deep_wm.grid.contains(endpoint) {
            return BinaryLabel::Negative;
        }
        if deep_wm.contains_point(endpoint) || ventricle_zone.contains_point(endpoint) {
            return BinaryLabel::Negative;
        }
    }
    BinaryLabel::Positive
}

fn endpoints_match(masks: &BundleMasks, first: Point3, last: Point3) -> bool {
    let [e0, e1] = &masks.endpoints;
    (e0.contains_point(first) && e1.contains_point(last))
        || (e0.contains_point(last) && e1.contains_point(first))
}

/// Mask-rule supervisor: positive iff some bundle contains every real sample
/// in its mask and the endpoints fall in its endpoint masks in either order.
pub fn maskrule_label(s: &ResampledStreamline, masks: &BundleMaskSet) -> Result<BinaryLabel> {
    if masks.bundles.is_empty() {
        return Err(Error::invalid("bundle set must be non-empty".to_string()));
    }
    let real = s.real_samples();
    let first = real[0];
    let last = real[real.len() - 1];
    for bundle in &masks.bundles {
        if !endpoints_match(bundle, first, last) {
            continue;
        }
        if real.iter().all(|&p| bundle.mask.contains_point(p)) {
            return Ok(BinaryLabel::Positive);
        }
    }
    Ok(BinaryLabel::Negative)
}

fn sample_label(parc: &LabelVolume, p: Point3) -> Option<u32> {
    nearest_label(parc, p).ok()
}

fn query_satisfied(q: &RegionQuery, endpoint_labels: (u32, u32), visited: &BTreeSet<u32>) -> bool {
    let (a, b) = endpoint_labels;
    let endpoints_ok = (q.endpoint_a.contains(&a) && q.endpoint_b.contains(&b))
        || (q.endpoint_a.contains(&b) && q.endpoint_b.contains(&a));
    if !endpoints_ok {
        return false;
    }
    if !q.require_traversal.iter().all(|r| visited.contains(r)) {
        return false;
    }
    q.exclude.iter().all(|r| !visited.contains(r))
}

/// Region-query supervisor: positive iff any query is satisfied by the
/// nearest-voxel parcellation labels along the streamline.
pub fn region_query_label(
    s: &ResampledStreamline,
    parc: &LabelVolume,
    queries: &[RegionQuery],
) -> Result<BinaryLabel> {
    if queries.is_empty() {
        return Err(Error::invalid("query set must be non-empty".to_string()));
    }
    let real = s.real_samples();
    let first = match sample_label(parc, real[0]) {
        Some(l) => l,
        None => return Ok(BinaryLabel::Negative),
    };
    let last = match sample_label(parc, real[real.len() - 1]) {
        Some(l) => l,
        None => return Ok(BinaryLabel::Negative),
    };
    let visited: BTreeSet<u32> = real.iter().filter_map(|&p| sample_label(parc, p)).collect();
    for q in queries {
        q.validate()?;
        if query_satisfied(q, (first, last), &visited) {
            return Ok(BinaryLabel::Positive);
        }
    }
    Ok(BinaryLabel::Negative)
}

/// Minimum average direct-flip distance between two equal-length streamlines:
/// the smaller of the mean pointwise distances over direct and flipped
/// orderings. Symmetric; zero iff the streamlines coincide up to a flip.
pub fn mdf_distance(a: &Streamline, b: &Streamline) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "MDF needs equal point counts, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let mut direct = 0.0;
    let mut flipped = 0.0;
    for i in 0..n {
        direct += crate::geom::dist(a.points()[i], b.points()[i]);
        flipped += crate::geom::dist(a.points()[i], b.points()[n - 1 - i]);
    }
    Ok((direct.min(flipped)) / n as f64)
}

/// Atlas supervisor: resamples `s` to the prototype point count and accepts
/// (positive) iff the MDF distance to some prototype is within that bundle's
/// threshold (inclusive).
pub fn atlas_label(s: &Streamline, atlas: &BundleAtlas) -> Result<BinaryLabel> {
    if atlas.bundles.is_empty() {
        return Err(Error::invalid("atlas must be non-empty".to_string()));
    }
    atlas.validate()?;
    let p = atlas.prototype_points().unwrap();
    let rs = resample_to_count(s, p)?;
    for bundle in &atlas.bundles {
        for proto in &bundle.prototypes {
            if mdf_distance(&rs, proto)? <= bundle.theta_mm {
                return Ok(BinaryLabel::Positive);
            }
        }
    }
    Ok(BinaryLabel::Negative)
}

/// Everything the four supervisors need for one subject. The ventricle zone
/// is the already-dilated mask.
#[derive(Debug, Clone)]
pub struct SupervisorContext<'a> {
    pub deep_wm: &'a MaskVolume,
    pub ventricle_zone: &'a MaskVolume,
    pub masks: &'a BundleMaskSet,
    pub parc: &'a LabelVolume,
    pub queries: &'a [RegionQuery],
    pub atlas: &'a BundleAtlas,
    pub loop_threshold_deg: f64,
    /// Resampling step for the mask-rule and region-query evaluations (the
    /// rules see the full resampled streamline, never a truncated form).
    pub resample_step: f64,
}

/// Runs all four supervisors on one streamline, in (TQ, RBX, TS, AIF) order.
pub fn run_supervisors(s: &Streamline, ctx: &SupervisorContext<'_>) -> Result<SupervisorVerdict> {
    let resampled = resample_fixed_step(s, ctx.resample_step)?;
    let full = crate::streamline::truncate_pad(&resampled, resampled.len(), ctx.resample_step)?;
    let tq = region_query_label(&full, ctx.parc, ctx.queries)?;
    let rbx = atlas_label(s, ctx.atlas)?;
    let ts = maskrule_label(&full, ctx.masks)?;
    let aif = aif_label(s, ctx.deep_wm, ctx.ventricle_zone, ctx.loop_threshold_deg);
    Ok(SupervisorVerdict::new(tq, rbx, ts, aif))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{self, RigidTransform};
    use crate::streamline::truncate_pad;
    use crate::volume::VolumeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid10() -> VolumeGrid {
        VolumeGrid::new([10, 10, 10], [1.0; 3], [0.0; 3]).unwrap()
    }

    fn straight_line(from: Point3, to: Point3, n: usize) -> Streamline {
        Streamline::new(
            (0..n)
                .map(|i| geom::lerp(from, to, i as f64 / (n - 1) as f64))
                .collect(),
        )
        .unwrap()
    }

    fn spiral(turns_deg: usize, radius: f64) -> Streamline {
        let pts = (0..=turns_deg)
            .map(|k| {
                let th = (k as f64).to_radians();
                [radius * th.cos(), radius * th.sin(), 0.0]
            })
            .collect();
        Streamline::new(pts).unwrap()
    }

    #[test]
    fn aif_straight_line_clear_of_masks_is_positive() {
        let g = grid10();
        let deep = MaskVolume::empty(g);
        let vent = MaskVolume::empty(g);
        let s = straight_line([1.0, 1.0, 1.0], [8.0, 8.0, 8.0], 10);
        assert_eq!(aif_label(&s, &deep, &vent, 360.0), BinaryLabel::Positive);
    }

    #[test]
    fn aif_flags_540_degree_spiral() {
        let g = VolumeGrid::new([40, 40, 40], [1.0; 3], [-20.0, -20.0, -20.0]).unwrap();
        let deep = MaskVolume::empty(g);
        let vent = MaskVolume::empty(g);
        let s = spiral(540, 8.0);
        assert_eq!(aif_label(&s, &deep, &vent, 360.0), BinaryLabel::Negative);
    }

    #[test]
    fn aif_full_circle_is_not_flagged() {
        // threshold is strictly greater-than: a single full turn passes
        let g = VolumeGrid::new([40, 40, 40], [1.0; 3], [-20.0, -20.0, -20.0]).unwrap();
        let deep = MaskVolume::empty(g);
        let vent = MaskVolume::empty(g);
        let s = spiral(360, 8.0);
        assert_eq!(aif_label(&s, &deep, &vent, 360.0), BinaryLabel::Positive);
    }

    #[test]
    fn aif_flags_endpoint_in_ventricle_zone() {
        let g = grid10();
        let deep = MaskVolume::empty(g);
        let mut vent = MaskVolume::empty(g);
        vent.set([8, 8, 8], true);
        let s = straight_line([1.0, 1.0, 1.0], [8.0, 8.0, 8.0], 10);
        assert_eq!(aif_label(&s, &deep, &vent, 360.0), BinaryLabel::Negative);
    }

    #[test]
    fn aif_endpoint_outside_grid_is_negative() {
        let g = grid10();
        let deep = MaskVolume::empty(g);
        let vent = MaskVolume::empty(g);
        let s = straight_line([1.0, 1.0, 1.0], [30.0, 1.0, 1.0], 10);
        assert_eq!(aif_label(&s, &deep, &vent, 360.0), BinaryLabel::Negative);
    }

    fn bundle_covering(
        g: VolumeGrid,
        mask_pred: impl Fn([usize; 3]) -> bool,
        ep0: [usize; 3],
        ep1: [usize; 3],
    ) -> BundleMasks {
        let mut mask = MaskVolume::empty(g);
        for z in 0..g.dims[2] {
            for y in 0..g.dims[1] {
                for x in 0..g.dims[0] {
                    if mask_pred([x, y, z]) {
                        mask.set([x, y, z], true);
                    }
                }
            }
        }
        let mut e0 = MaskVolume::empty(g);
        e0.set(ep0, true);
        let mut e1 = MaskVolume::empty(g);
        e1.set(ep1, true);
        BundleMasks::new("b".to_string(), mask, e0, e1).unwrap()
    }

    #[test]
    fn maskrule_accepts_contained_streamline_with_matching_endpoints() {
        let g = grid10();
        let b = bundle_covering(g, |i| i[1] == 5 && i[2] == 5, [0, 5, 5], [9, 5, 5]);
        let set = BundleMaskSet { bundles: vec![b] };
        let s = straight_line([0.0, 5.0, 5.0], [9.0, 5.0, 5.0], 10);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        assert_eq!(maskrule_label(&r, &set).unwrap(), BinaryLabel::Positive);
    }

    #[test]
    fn maskrule_rejects_single_escaping_sample() {
        let g = grid10();
        let mut b = bundle_covering(g, |i| i[1] == 5 && i[2] == 5, [0, 5, 5], [9, 5, 5]);
        // carve a hole mid-bundle
        b.mask.set([5, 5, 5], false);
        let set = BundleMaskSet { bundles: vec![b] };
        let s = straight_line([0.0, 5.0, 5.0], [9.0, 5.0, 5.0], 10);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        assert_eq!(maskrule_label(&r, &set).unwrap(), BinaryLabel::Negative);
    }

    #[test]
    fn maskrule_accepts_swapped_endpoints() {
        let g = grid10();
        let b = bundle_covering(g, |i| i[1] == 5 && i[2] == 5, [0, 5, 5], [9, 5, 5]);
        let set = BundleMaskSet { bundles: vec![b] };
        // reversed: starts in E1, ends in E0
        let s = straight_line([9.0, 5.0, 5.0], [0.0, 5.0, 5.0], 10);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        assert_eq!(maskrule_label(&r, &set).unwrap(), BinaryLabel::Positive);
    }

    #[test]
    fn maskrule_rejects_empty_bundle_set() {
        let s = straight_line([0.0, 5.0, 5.0], [9.0, 5.0, 5.0], 10);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        assert!(maskrule_label(&r, &BundleMaskSet::default()).is_err());
    }

    #[test]
    fn maskrule_full_coverage_accepts_everything_in_range() {
        let g = grid10();
        let b = bundle_covering(g, |_| true, [0, 0, 0], [0, 0, 0]);
        let mut set = BundleMaskSet { bundles: vec![b] };
        // endpoint masks covering everything
        set.bundles[0].endpoints[0] = MaskVolume { grid: g, data: vec![true; 1000] };
        set.bundles[0].endpoints[1] = MaskVolume { grid: g, data: vec![true; 1000] };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let pts: Vec<Point3> = (0..8)
                .map(|_| {
                    [
                        rng.random_range(0.0..9.0),
                        rng.random_range(0.0..9.0),
                        rng.random_range(0.0..9.0),
                    ]
                })
                .collect();
            let s = Streamline::new(pts).unwrap();
            let r = truncate_pad(&s, 8, 1.0).unwrap();
            assert_eq!(maskrule_label(&r, &set).unwrap(), BinaryLabel::Positive);
        }
    }

    // Oracle: independent brute-force evaluation of the containment and
    // endpoint conditions, written as a direct predicate.
    #[test]
    fn maskrule_agrees_with_bruteforce_evaluator() {
        let g = grid10();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut bundles = Vec::new();
        for bi in 0..3 {
            let mut mask = MaskVolume::empty(g);
            for i in 0..1000 {
                if rng.random_range(0.0..1.0) < 0.55 {
                    mask.data[i] = true;
                }
            }
            let mut e0 = MaskVolume::empty(g);
            let mut e1 = MaskVolume::empty(g);
            for i in 0..1000 {
                if rng.random_range(0.0..1.0) < 0.25 {
                    e0.data[i] = true;
                }
                if rng.random_range(0.0..1.0) < 0.25 {
                    e1.data[i] = true;
                }
            }
            bundles.push(BundleMasks::new(format!("b{bi}"), mask, e0, e1).unwrap());
        }
        let set = BundleMaskSet { bundles };

        for _ in 0..1000 {
            let pts: Vec<Point3> = (0..6)
                .map(|_| {
                    [
                        rng.random_range(0.0..9.0),
                        rng.random_range(0.0..9.0),
                        rng.random_range(0.0..9.0),
                    ]
                })
                .collect();
            let s = Streamline::new(pts).unwrap();
            let r = truncate_pad(&s, 6, 1.0).unwrap();
            let got = maskrule_label(&r, &set).unwrap();

            let nearest = |p: Point3| -> [usize; 3] { g.nearest_index(p).unwrap() };
            let mut expect = false;
            for b in &set.bundles {
                let all_in = r.real_samples().iter().all(|&p| b.mask.at(nearest(p)));
                let s0 = nearest(r.real_samples()[0]);
                let sn = nearest(r.real_samples()[5]);
                let ep = (b.endpoints[0].at(s0) && b.endpoints[1].at(sn))
                    || (b.endpoints[0].at(sn) && b.endpoints[1].at(s0));
                if all_in && ep {
                    expect = true;
                    break;
                }
            }
            assert_eq!(got, BinaryLabel::from_bool(expect));
        }
    }

    fn parc_with_regions(g: VolumeGrid) -> LabelVolume {
        let mut parc = LabelVolume::zeros(g);
        // region 1 front slab, region 2 back slab, region 3 a middle pillar
        for z in 0..10 {
            for y in 0..10 {
                for x in 0..10 {
                    let i = g.linear([x, y, z]);
                    parc.data[i] = if x <= 1 {
                        1
                    } else if x >= 8 {
                        2
                    } else if x == 5 && y == 5 {
                        3
                    } else {
                        0
                    };
                }
            }
        }
        parc
    }

    fn q(
        a: &[u32],
        b: &[u32],
        traversal: &[u32],
        exclude: &[u32],
    ) -> RegionQuery {
        RegionQuery {
            name: "q".to_string(),
            endpoint_a: a.iter().cloned().collect(),
            endpoint_b: b.iter().cloned().collect(),
            require_traversal: traversal.iter().cloned().collect(),
            exclude: exclude.iter().cloned().collect(),
        }
    }

    #[test]
    fn region_query_accepts_matching_endpoints() {
        let g = grid10();
        let parc = parc_with_regions(g);
        let s = straight_line([0.0, 4.0, 4.0], [9.0, 4.0, 4.0], 10);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        let queries = vec![q(&[1], &[2], &[], &[])];
        assert_eq!(
            region_query_label(&r, &parc, &queries).unwrap(),
            BinaryLabel::Positive
        );
        // either endpoint assignment order
        let rev = straight_line([9.0, 4.0, 4.0], [0.0, 4.0, 4.0], 10);
        let rrev = truncate_pad(&rev, 16, 1.0).unwrap();
        assert_eq!(
            region_query_label(&rrev, &parc, &queries).unwrap(),
            BinaryLabel::Positive
        );
    }

    #[test]
    fn region_query_rejects_wrong_endpoint() {
        let g = grid10();
        let parc = parc_with_regions(g);
        // ends mid-volume in background
        let s = straight_line([0.0, 4.0, 4.0], [5.0, 4.0, 4.0], 6);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        let queries = vec![q(&[1], &[2], &[], &[])];
        assert_eq!(
            region_query_label(&r, &parc, &queries).unwrap(),
            BinaryLabel::Negative
        );
    }

    #[test]
    fn region_query_exclusion_and_traversal() {
        let g = grid10();
        let parc = parc_with_regions(g);
        // passes through the pillar at (5,5)
        let s = straight_line([0.0, 5.0, 5.0], [9.0, 5.0, 5.0], 10);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        // excluded region 3 is visited -> negative
        assert_eq!(
            region_query_label(&r, &parc, &[q(&[1], &[2], &[], &[3])]).unwrap(),
            BinaryLabel::Negative
        );
        // required traversal of region 3 -> positive
        assert_eq!(
            region_query_label(&r, &parc, &[q(&[1], &[2], &[3], &[])]).unwrap(),
            BinaryLabel::Positive
        );
        // required traversal not met on a line missing the pillar
        let s2 = straight_line([0.0, 3.0, 5.0], [9.0, 3.0, 5.0], 10);
        let r2 = truncate_pad(&s2, 16, 1.0).unwrap();
        assert_eq!(
            region_query_label(&r2, &parc, &[q(&[1], &[2], &[3], &[])]).unwrap(),
            BinaryLabel::Negative
        );
    }

    // Oracle: brute-force constraint evaluation per query.
    #[test]
    fn region_query_agrees_with_bruteforce() {
        let g = grid10();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut parc = LabelVolume::zeros(g);
        for l in parc.data.iter_mut() {
            *l = rng.random_range(0..6u32);
        }
        let queries = vec![
            q(&[1, 2], &[3], &[4], &[]),
            q(&[0], &[5], &[], &[2]),
            q(&[3], &[3], &[], &[]),
        ];
        for _ in 0..500 {
            let pts: Vec<Point3> = (0..7)
                .map(|_| {
                    [
                        rng.random_range(0.0..9.0),
                        rng.random_range(0.0..9.0),
                        rng.random_range(0.0..9.0),
                    ]
                })
                .collect();
            let s = Streamline::new(pts).unwrap();
            let r = truncate_pad(&s, 7, 1.0).unwrap();
            let got = region_query_label(&r, &parc, &queries).unwrap();

            let labels: Vec<u32> = r
                .real_samples()
                .iter()
                .map(|&p| parc.at(g.nearest_index(p).unwrap()))
                .collect();
            let first = labels[0];
            let last = *labels.last().unwrap();
            let mut expect = false;
            for qq in &queries {
                let ep = (qq.endpoint_a.contains(&first) && qq.endpoint_b.contains(&last))
                    || (qq.endpoint_a.contains(&last) && qq.endpoint_b.contains(&first));
                let trav = qq
                    .require_traversal
                    .iter()
                    .all(|t| labels.iter().any(|l| l == t));
                let excl = qq.exclude.iter().all(|e| !labels.iter().any(|l| l == e));
                if ep && trav && excl {
                    expect = true;
                }
            }
            assert_eq!(got, BinaryLabel::from_bool(expect));
        }
    }

    #[test]
    fn region_query_empty_set_is_error() {
        let g = grid10();
        let parc = parc_with_regions(g);
        let s = straight_line([0.0, 4.0, 4.0], [9.0, 4.0, 4.0], 10);
        let r = truncate_pad(&s, 16, 1.0).unwrap();
        assert!(region_query_label(&r, &parc, &[]).is_err());
    }

    #[test]
    fn mdf_identical_and_flipped_are_zero() {
        let s = straight_line([0.0, 0.0, 0.0], [10.0, 0.0, 0.0], 12);
        let rev = Streamline::new(s.points().iter().rev().cloned().collect()).unwrap();
        assert_eq!(mdf_distance(&s, &s).unwrap(), 0.0);
        assert_eq!(mdf_distance(&s, &rev).unwrap(), 0.0);
    }

    #[test]
    fn mdf_parallel_offset_equals_offset() {
        let s = straight_line([0.0, 0.0, 0.0], [10.0, 0.0, 0.0], 12);
        let t = RigidTransform {
            rotation: RigidTransform::identity().rotation,
            translation: [0.0, 3.0, 0.0],
        };
        let shifted = s.apply_rigid(&t);
        let d = mdf_distance(&s, &shifted).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mdf_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let mk = |rng: &mut ChaCha8Rng| {
                let pts: Vec<Point3> = (0..9)
                    .map(|_| {
                        [
                            rng.random_range(-5.0..5.0),
                            rng.random_range(-5.0..5.0),
                            rng.random_range(-5.0..5.0),
                        ]
                    })
                    .collect();
                Streamline::new(pts).unwrap()
            };
            let a = mk(&mut rng);
            let b = mk(&mut rng);
            let dab = mdf_distance(&a, &b).unwrap();
            let dba = mdf_distance(&b, &a).unwrap();
            assert!((dab - dba).abs() < 1e-12);
        }
    }

    #[test]
    fn mdf_rejects_mismatched_point_counts() {
        let a = straight_line([0.0; 3], [1.0, 0.0, 0.0], 5);
        let b = straight_line([0.0; 3], [1.0, 0.0, 0.0], 6);
        assert!(mdf_distance(&a, &b).is_err());
    }

    fn tiny_atlas(theta: f64) -> BundleAtlas {
        let proto = resample_to_count(
            &straight_line([0.0, 0.0, 0.0], [30.0, 0.0, 0.0], 10),
            16,
        )
        .unwrap();
        BundleAtlas {
            bundles: vec![AtlasBundle {
                name: "b0".to_string(),
                prototypes: vec![proto],
                theta_mm: theta,
            }],
        }
    }

    #[test]
    fn atlas_prototype_itself_is_positive() {
        let atlas = tiny_atlas(1.0);
        let s = straight_line([0.0, 0.0, 0.0], [30.0, 0.0, 0.0], 25);
        assert_eq!(atlas_label(&s, &atlas).unwrap(), BinaryLabel::Positive);
    }

    #[test]
    fn atlas_translated_beyond_theta_is_negative() {
        let atlas = tiny_atlas(5.0);
        let s = straight_line([0.0, 9.0, 0.0], [30.0, 9.0, 0.0], 25);
        assert_eq!(atlas_label(&s, &atlas).unwrap(), BinaryLabel::Negative);
    }

    #[test]
    fn atlas_threshold_is_inclusive() {
        let atlas = tiny_atlas(5.0);
        // parallel offset of exactly theta
        let s = straight_line([0.0, 5.0, 0.0], [30.0, 5.0, 0.0], 25);
        assert_eq!(atlas_label(&s, &atlas).unwrap(), BinaryLabel::Positive);
    }

    #[test]
    fn atlas_empty_is_error() {
        let s = straight_line([0.0; 3], [1.0, 0.0, 0.0], 5);
        assert!(atlas_label(&s, &BundleAtlas::default()).is_err());
    }

    #[test]
    fn aif_invariant_under_whole_voxel_translation() {
        let g = grid10();
        let mut deep = MaskVolume::empty(g);
        deep.set([5, 5, 5], true);
        let vent = MaskVolume::empty(g);
        let s = straight_line([1.0, 1.0, 1.0], [5.0, 5.0, 5.0], 8);
        let l1 = aif_label(&s, &deep, &vent, 360.0);

        // translate streamline and masks jointly by one voxel in x
        let t = RigidTransform {
            rotation: RigidTransform::identity().rotation,
            translation: [1.0, 0.0, 0.0],
        };
        let st = s.apply_rigid(&t);
        let mut deep_t = MaskVolume::empty(g);
        deep_t.set([6, 5, 5], true);
        let l2 = aif_label(&st, &deep_t, &vent, 360.0);
        assert_eq!(l1, l2);
        assert_eq!(l1, BinaryLabel::Negative);
    }
}
