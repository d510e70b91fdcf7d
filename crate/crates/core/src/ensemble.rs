//! Composition of the four supervisor labels into 16 classes and the derived
//! three-class POS / NEG / U label.
//!
//! The code string orders the labels as (TQ, RBX, TS, AIF), e.g. `"pnpp"`.
//! The three-class mapping: AIF negative overrules everything (NEG); AIF
//! positive with RBX or TS positive is POS; AIF positive with both RBX and TS
//! negative is inconclusive (U).

use crate::error::{Error, Result};
use crate::supervisors::{BinaryLabel, SupervisorVerdict};

/// One of the 16 joint outcomes of the four binary supervisor labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CompositionClass(u8);

impl CompositionClass {
    pub const COUNT: usize = 16;

    /// Index encoding: bit 3 = TQ, bit 2 = RBX, bit 1 = TS, bit 0 = AIF,
    /// with positive = 1.
    pub fn from_index(i: usize) -> Option<Self> {
        (i < 16).then_some(CompositionClass(i as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = CompositionClass> {
        (0..16).map(CompositionClass)
    }

    pub fn tq(self) -> BinaryLabel {
        BinaryLabel::from_bool(self.0 & 0b1000 != 0)
    }

    pub fn rbx(self) -> BinaryLabel {
        BinaryLabel::from_bool(self.0 & 0b0100 != 0)
    }

    pub fn ts(self) -> BinaryLabel {
        BinaryLabel::from_bool(self.0 & 0b0010 != 0)
    }

    pub fn aif(self) -> BinaryLabel {
        BinaryLabel::from_bool(self.0 & 0b0001 != 0)
    }

    /// Four-letter code over {p, n} in (TQ, RBX, TS, AIF) order.
    pub fn code(self) -> String {
        [self.tq(), self.rbx(), self.ts(), self.aif()]
            .iter()
            .map(|l| l.code())
            .collect()
    }

    pub fn from_code(code: &str) -> Result<Self> {
        let chars: Vec<char> = code.chars().collect();
        if chars.len() != 4 {
            return Err(Error::invalid(format!(
                "composition code must have 4 letters, got {code:?}"
            )));
        }
        let mut bits = 0u8;
        for (i, c) in chars.iter().enumerate() {
            let label = BinaryLabel::from_code(*c)
                .ok_or_else(|| Error::invalid(format!("bad label letter {c:?} in {code:?}")))?;
            if label.is_positive() {
                bits |= 1 << (3 - i);
            }
        }
        Ok(CompositionClass(bits))
    }

    /// Inverse of `compose`.
    pub fn verdict(self) -> SupervisorVerdict {
        SupervisorVerdict::new(self.tq(), self.rbx(), self.ts(), self.aif())
    }
}

impl std::fmt::Display for CompositionClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.code())
    }
}

/// Three-class plausibility label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum TriClass {
    Pos,
    Neg,
    U,
}

impl TriClass {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            TriClass::Pos => 0,
            TriClass::Neg => 1,
            TriClass::U => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TriClass::Pos => "POS",
            TriClass::Neg => "NEG",
            TriClass::U => "U",
        }
    }
}

/// Joins the four binary labels into a composition class.
pub fn compose(v: &SupervisorVerdict) -> CompositionClass {
    let mut bits = 0u8;
    if v.tq.is_positive() {
        bits |= 0b1000;
    }
    if v.rbx.is_positive() {
        bits |= 0b0100;
    }
    if v.ts.is_positive() {
        bits |= 0b0010;
    }
    if v.aif.is_positive() {
        bits |= 0b0001;
    }
    CompositionClass(bits)
}

/// Total mapping of the 16 composition classes onto POS / NEG / U.
pub fn map_to_triclass(c: CompositionClass) -> TriClass {
    if !c.aif().is_positive() {
        TriClass::Neg
    } else if c.rbx().is_positive() || c.ts().is_positive() {
        TriClass::Pos
    } else {
        TriClass::U
    }
}

/// The six composition classes expected to arise mainly from processing
/// inaccuracies.
pub fn is_borderline(c: CompositionClass) -> bool {
    matches!(c.code().as_str(), "nnpp" | "ppnn" | "pppn" | "npnn" | "nnpn" | "nppn")
}

/// Per-class and per-triclass counts over a verdict sequence.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ClassDistribution {
    pub per_class: [usize; 16],
    pub per_tri: [usize; 3],
    pub total: usize,
}

pub fn class_distribution(verdicts: &[SupervisorVerdict]) -> ClassDistribution {
    let mut per_class = [0usize; 16];
    let mut per_tri = [0usize; 3];
    for v in verdicts {
        let c = compose(v);
        per_class[c.index()] += 1;
        per_tri[map_to_triclass(c).index()] += 1;
    }
    ClassDistribution { per_class, per_tri, total: verdicts.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const POS_CODES: [&str; 6] = ["pppp", "pnpp", "ppnp", "npnp", "nnpp", "nppp"];
    const NEG_CODES: [&str; 8] = [
        "nnnn", "pnnn", "pnpn", "ppnn", "pppn", "npnn", "nnpn", "nppn",
    ];
    const U_CODES: [&str; 2] = ["nnnp", "pnnp"];
    const BORDERLINE_CODES: [&str; 6] = ["nnpp", "ppnn", "pppn", "npnn", "nnpn", "nppn"];

    #[test]
    fn compose_examples() {
        let p = BinaryLabel::Positive;
        let n = BinaryLabel::Negative;
        assert_eq!(compose(&SupervisorVerdict::new(p, p, p, p)).code(), "pppp");
        assert_eq!(compose(&SupervisorVerdict::new(n, n, n, n)).code(), "nnnn");
        assert_eq!(compose(&SupervisorVerdict::new(n, p, n, p)).code(), "npnp");
    }

    #[test]
    fn triclass_mapping_matches_published_lists_exactly() {
        for code in POS_CODES {
            let c = CompositionClass::from_code(code).unwrap();
            assert_eq!(map_to_triclass(c), TriClass::Pos, "{code}");
        }
        for code in NEG_CODES {
            let c = CompositionClass::from_code(code).unwrap();
            assert_eq!(map_to_triclass(c), TriClass::Neg, "{code}");
        }
        for code in U_CODES {
            let c = CompositionClass::from_code(code).unwrap();
            assert_eq!(map_to_triclass(c), TriClass::U, "{code}");
        }
    }

    #[test]
    fn preimage_sizes_are_6_8_2() {
        let mut counts = [0usize; 3];
        for c in CompositionClass::all() {
            counts[map_to_triclass(c).index()] += 1;
        }
        assert_eq!(counts, [6, 8, 2]);
    }

    #[test]
    fn aif_negative_always_maps_to_neg() {
        for c in CompositionClass::all() {
            if c.code().ends_with('n') {
                assert_eq!(map_to_triclass(c), TriClass::Neg);
            }
        }
    }

    #[test]
    fn aif_positive_splits_on_rbx_or_ts() {
        for c in CompositionClass::all() {
            if c.code().ends_with('p') {
                let expect = if c.rbx().is_positive() || c.ts().is_positive() {
                    TriClass::Pos
                } else {
                    TriClass::U
                };
                assert_eq!(map_to_triclass(c), expect, "{c}");
            }
        }
    }

    #[test]
    fn borderline_set_is_exactly_the_six_starred_codes() {
        let mut count = 0;
        for c in CompositionClass::all() {
            let expect = BORDERLINE_CODES.contains(&c.code().as_str());
            assert_eq!(is_borderline(c), expect, "{c}");
            if is_borderline(c) {
                count += 1;
            }
        }
        assert_eq!(count, 6);
        assert!(!is_borderline(CompositionClass::from_code("pppp").unwrap()));
    }

    #[test]
    fn compose_decompose_roundtrip_over_all_16() {
        for c in CompositionClass::all() {
            assert_eq!(compose(&c.verdict()), c);
            assert_eq!(CompositionClass::from_code(&c.code()).unwrap(), c);
        }
    }

    #[test]
    fn distribution_empty_is_all_zeros() {
        let d = class_distribution(&[]);
        assert_eq!(d.per_class, [0; 16]);
        assert_eq!(d.per_tri, [0; 3]);
        assert_eq!(d.total, 0);
    }

    #[test]
    fn distribution_one_of_each_class() {
        let verdicts: Vec<SupervisorVerdict> =
            CompositionClass::all().map(|c| c.verdict()).collect();
        let d = class_distribution(&verdicts);
        assert_eq!(d.per_class, [1; 16]);
        assert_eq!(d.per_tri, [6, 8, 2]);
        assert_eq!(d.total, 16);
    }

    // Oracle: independent tally re-count.
    #[test]
    fn distribution_consistent_on_random_verdicts() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let verdicts: Vec<SupervisorVerdict> = (0..10_000)
            .map(|_| {
                CompositionClass::from_index(rng.random_range(0..16))
                    .unwrap()
                    .verdict()
            })
            .collect();
        let d = class_distribution(&verdicts);
        assert_eq!(d.per_class.iter().sum::<usize>(), verdicts.len());
        assert_eq!(d.per_tri.iter().sum::<usize>(), verdicts.len());
        // recount independently
        let mut recount = [0usize; 16];
        for v in &verdicts {
            let mut idx = 0usize;
            for (bit, l) in v.labels().iter().enumerate() {
                if l.is_positive() {
                    idx |= 1 << (3 - bit);
                }
            }
            recount[idx] += 1;
        }
        assert_eq!(d.per_class, recount);
        // triclass counts equal class counts aggregated through the mapping
        let mut tri = [0usize; 3];
        for c in CompositionClass::all() {
            tri[map_to_triclass(c).index()] += d.per_class[c.index()];
        }
        assert_eq!(d.per_tri, tri);
    }
}
