//! In-memory dataset: per-subject volumes, tractogram and supervisor
//! verdicts, plus the glue to descriptor extraction and the sampler.

use crate::descriptor::{build_descriptors, DescriptorConfig, DescriptorSet};
use crate::error::{Error, Result};
use crate::sampler::{DatasetIndex, SubjectPools};
use crate::sh::ShCoefficients;
use crate::streamline::Streamline;
use crate::supervisors::SupervisorVerdict;
use crate::volume::{LabelVolume, ScalarVolume};

#[derive(Debug, Clone)]
pub struct SubjectData {
    pub name: String,
    /// Already normalized to [0, 1].
    pub t1w: ScalarVolume,
    pub sh: ShCoefficients,
    pub parc: LabelVolume,
    pub streamlines: Vec<Streamline>,
    pub verdicts: Vec<SupervisorVerdict>,
}

impl SubjectData {
    pub fn validate(&self) -> Result<()> {
        if self.streamlines.len() != self.verdicts.len() {
            return Err(Error::invalid(format!(
                "subject {}: {} streamlines but {} verdicts",
                self.name,
                self.streamlines.len(),
                self.verdicts.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub subjects: Vec<SubjectData>,
    pub region_table: Vec<u32>,
}

impl Dataset {
    pub fn subject_names(&self) -> Vec<String> {
        self.subjects.iter().map(|s| s.name.clone()).collect()
    }

    pub fn subject(&self, name: &str) -> Result<&SubjectData> {
        self.subjects
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::invalid(format!("unknown subject {name}")))
    }

    /// Sampler index over the named subjects. Subject order follows `names`.
    pub fn index_for(&self, names: &[String]) -> Result<DatasetIndex> {
        let mut idx = DatasetIndex::default();
        for name in names {
            let subject = self.subject(name)?;
            subject.validate()?;
            let classes: Vec<_> = subject
                .verdicts
                .iter()
                .map(crate::ensemble::compose)
                .collect();
            idx.push(SubjectPools::new(name.clone(), &classes));
        }
        Ok(idx)
    }

    /// Descriptor extraction settings for one subject: the normalization
    /// bbox is that subject's T1w grid bounding box.
    pub fn descriptor_config(
        &self,
        subject: &SubjectData,
        n: usize,
        k: usize,
        step: f64,
    ) -> DescriptorConfig {
        DescriptorConfig::new(
            n,
            k,
            step,
            subject.t1w.grid.world_bbox(),
            self.region_table.clone(),
        )
    }

    /// Extracts descriptors for one streamline of one subject.
    pub fn descriptors(
        &self,
        subject_idx: usize,
        streamline: usize,
        n: usize,
        k: usize,
        step: f64,
    ) -> Result<DescriptorSet> {
        let subject = &self.subjects[subject_idx];
        let cfg = self.descriptor_config(subject, n, k, step);
        build_descriptors(
            &subject.streamlines[streamline],
            &subject.t1w,
            &subject.sh,
            &subject.parc,
            &cfg,
        )
    }

    /// Index positions of the named subjects within `self.subjects`.
    pub fn positions(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.subjects
                    .iter()
                    .position(|s| &s.name == n)
                    .ok_or_else(|| Error::invalid(format!("unknown subject {n}")))
            })
            .collect()
    }
}
