//! The star-shaped multi-branch classifier.
//!
//! Five input branches (xyz, lm, sh, t1w, wmparc) of convolutional blocks
//! feed a channel-concatenated trunk; four output branches (TQ, RBX, TS, AIF)
//! each run further blocks, flatten, and pass through FC1 -> FC2. The FC2
//! features of all four branches are concatenated and fed to every branch's
//! FC3 -> FC4 head. These cross links are one-way: values pass, gradients do
//! not — during backpropagation each branch keeps only its own slice of the
//! concatenation, so no output branch receives gradient from another
//! branch's loss. Input branches are shared and receive gradient from all
//! four losses.

use super::layers::{
    maxpool, maxpool_backward, relu2, relu2_backward, relu3, relu3_backward, BatchNorm1d,
    BnCache, Conv1d, Linear, ParamVisitor, PoolCache,
};
use crate::descriptor::{DescriptorKind, DescriptorSet};
use crate::error::{Error, Result};
use ndarray::{s, Array2, Array3, NdFloat};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INPUT_BRANCHES: usize = 5;
pub const OUTPUT_BRANCHES: usize = 4;
pub const SUPERVISOR_NAMES: [&str; 4] = ["tq", "rbx", "ts", "aif"];

/// Architecture hyperparameters. Widths follow the published layout by
/// default; the FC1 input width is always derived from the actual flattened
/// feature size, never hard-coded.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StarConfig {
    /// Samples per streamline (descriptor length N).
    pub n: usize,
    /// Channels per input branch in (xyz, lm, sh, t1w, wmparc) order.
    pub in_channels: [usize; 5],
    pub input_blocks: usize,
    /// Kernels per conv block, per input branch.
    pub input_kernels: [usize; 5],
    pub input_ksize: usize,
    pub output_blocks: usize,
    pub output_kernels: usize,
    pub output_ksize: usize,
    /// 1-based block ids (within input branches) followed by pooling.
    pub pool_blocks: Vec<usize>,
    pub pool_window: usize,
    pub fc_hidden: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl StarConfig {
    /// Published full-size layout: 12 input blocks of 208 kernels (416 for
    /// SH) at kernel size 3 with pooling after blocks 4 and 8; 4 output
    /// blocks of 208 kernels at kernel size 5; FC widths 196.
    pub fn full(n: usize, k: usize, sh_channels: usize, l: usize) -> Self {
        StarConfig {
            n,
            in_channels: [3, k, sh_channels, 1, l],
            input_blocks: 12,
            input_kernels: [208, 208, 416, 208, 208],
            input_ksize: 3,
            output_blocks: 4,
            output_kernels: 208,
            output_ksize: 5,
            pool_blocks: vec![4, 8],
            pool_window: 2,
            fc_hidden: 196,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    /// Reduced layout for desk-scale training and gradient checking.
    pub fn tiny(n: usize, k: usize, sh_channels: usize, l: usize, kernels: usize) -> Self {
        StarConfig {
            n,
            in_channels: [3, k, sh_channels, 1, l],
            input_blocks: 2,
            input_kernels: [kernels; 5],
            input_ksize: 3,
            output_blocks: 2,
            output_kernels: kernels,
            output_ksize: 5,
            pool_blocks: vec![4, 8],
            pool_window: 2,
            fc_hidden: 16,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.fc_hidden == 0 || self.output_kernels == 0 {
            return Err(Error::invalid("network sizes must be positive".to_string()));
        }
        if self.in_channels.iter().any(|&c| c == 0)
            || self.input_kernels.iter().any(|&k| k == 0)
        {
            return Err(Error::invalid("channel counts must be positive".to_string()));
        }
        if self.input_ksize % 2 == 0 || self.output_ksize % 2 == 0 {
            return Err(Error::invalid("kernel sizes must be odd".to_string()));
        }
        if self.pool_window < 2 && !self.pool_blocks.is_empty() {
            return Err(Error::invalid("pool window must be >= 2".to_string()));
        }
        if self.trunk_len() == 0 {
            return Err(Error::invalid(format!(
                "pooling reduces length {} to zero",
                self.n
            )));
        }
        Ok(())
    }

    /// Channel count of the concatenated trunk.
    pub fn trunk_channels(&self) -> usize {
        self.input_kernels.iter().sum()
    }

    /// Feature length after the input branches (pooling applied at the
    /// configured block ids).
    pub fn trunk_len(&self) -> usize {
        let mut l = self.n;
        for block_id in 1..=self.input_blocks {
            if self.pool_blocks.contains(&block_id) {
                l /= self.pool_window;
            }
        }
        l
    }

    /// Flattened feature size entering FC1, derived from the block/pool
    /// structure.
    pub fn flat_size(&self) -> usize {
        self.output_kernels * self.trunk_len()
    }
}

#[derive(Debug, Clone)]
struct ConvBlock<F> {
    conv: Conv1d<F>,
    bn: BatchNorm1d<F>,
    pool: Option<usize>,
}

#[derive(Debug, Clone)]
struct BlockCache<F> {
    x: Array3<F>,
    bn: BnCache<F>,
    relu_out: Array3<F>,
    pool: Option<PoolCache>,
}

impl<F: NdFloat> ConvBlock<F> {
    fn new(
        in_ch: usize,
        out_ch: usize,
        ksize: usize,
        pool: Option<usize>,
        cfg: &StarConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(ConvBlock {
            conv: Conv1d::new(in_ch, out_ch, ksize, rng)?,
            bn: BatchNorm1d::new(out_ch, cfg.bn_momentum, cfg.bn_eps),
            pool,
        })
    }

    fn forward(
        &mut self,
        x: Array3<F>,
        train: bool,
        update_running: bool,
    ) -> Result<(Array3<F>, BlockCache<F>)> {
        let conv_out = self.conv.forward(&x)?;
        let (bn_out, bn_cache) = self.bn.forward(&conv_out, train, update_running)?;
        let relu_out = relu3(&bn_out);
        let (y, pool_cache) = match self.pool {
            Some(w) => {
                let (p, c) = maxpool(&relu_out, w)?;
                (p, Some(c))
            }
            None => (relu_out.clone(), None),
        };
        Ok((y, BlockCache { x, bn: bn_cache, relu_out, pool: pool_cache }))
    }

    fn backward(&mut self, cache: &BlockCache<F>, dy: &Array3<F>) -> Array3<F> {
        let d_relu = match &cache.pool {
            Some(pc) => maxpool_backward(pc, dy),
            None => dy.clone(),
        };
        let d_bn = relu3_backward(&cache.relu_out, &d_relu);
        let d_conv = self.bn.backward(&cache.bn, &d_bn);
        self.conv.backward(&cache.x, &d_conv)
    }

    fn zero_grad(&mut self) {
        self.conv.zero_grad();
        self.bn.zero_grad();
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_, F>) {
        self.conv.visit_params(f);
        self.bn.visit_params(f);
    }
}

#[derive(Debug, Clone)]
struct OutputBranch<F> {
    blocks: Vec<ConvBlock<F>>,
    fc1: Linear<F>,
    fc2: Linear<F>,
    fc3: Linear<F>,
    fc4: Linear<F>,
}

/// A batch of descriptor tensors, one (batch, channels, n) array per kind.
#[derive(Debug, Clone)]
pub struct DescriptorBatch<F> {
    pub channels: [Array3<F>; 5],
}

impl<F: NdFloat> DescriptorBatch<F> {
    /// Stacks descriptor sets into batch tensors, converting the float type.
    pub fn from_sets(sets: &[&DescriptorSet]) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::invalid("empty batch".to_string()));
        }
        let n = sets[0].n();
        let mut channels: Vec<Array3<F>> = Vec::with_capacity(5);
        for kind in DescriptorKind::ALL {
            let rows = sets[0].channel(kind).nrows();
            let mut t = Array3::zeros((sets.len(), rows, n));
            for (bi, set) in sets.iter().enumerate() {
                let m = set.channel(kind);
                if m.nrows() != rows || m.ncols() != n {
                    return Err(Error::ShapeMismatch(format!(
                        "descriptor {} shape varies within batch",
                        kind.name()
                    )));
                }
                for i in 0..rows {
                    for j in 0..n {
                        t[(bi, i, j)] = F::from(m[(i, j)]).unwrap();
                    }
                }
            }
            channels.push(t);
        }
        let channels: [Array3<F>; 5] = channels.try_into().expect("five descriptor kinds");
        Ok(DescriptorBatch { channels })
    }

    pub fn batch_size(&self) -> usize {
        self.channels[0].dim().0
    }
}

#[derive(Debug, Clone)]
struct OutputTape<F> {
    blocks: Vec<BlockCache<F>>,
    flat: Array2<F>,
    a1: Array2<F>,
    a2: Array2<F>,
    a3: Array2<F>,
}

/// Forward-pass intermediates needed by `backward`.
#[derive(Debug, Clone)]
pub struct StarTape<F> {
    input_blocks: Vec<Vec<BlockCache<F>>>,
    outputs: Vec<OutputTape<F>>,
    concat_h: Array2<F>,
    trunk_dim: (usize, usize, usize),
}

impl<F: NdFloat> StarTape<F> {
    /// Post-ReLU FC2 features of the four output branches, as fed to the
    /// shared concatenation. Used to pin the cross links in
    /// [`StarNetwork::forward_cross_frozen`].
    pub fn fc2_features(&self) -> [Array2<F>; 4] {
        let v: Vec<Array2<F>> = self.outputs.iter().map(|o| o.a2.clone()).collect();
        v.try_into().expect("four output branches")
    }
}

#[derive(Debug, Clone)]
pub struct StarNetwork<F> {
    pub cfg: StarConfig,
    input_branches: Vec<Vec<ConvBlock<F>>>,
    output_branches: Vec<OutputBranch<F>>,
}

impl<F: NdFloat> StarNetwork<F> {
    pub fn new(cfg: StarConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut input_branches = Vec::with_capacity(INPUT_BRANCHES);
        for branch in 0..INPUT_BRANCHES {
            let mut blocks = Vec::with_capacity(cfg.input_blocks);
            let mut in_ch = cfg.in_channels[branch];
            for block_id in 1..=cfg.input_blocks {
                let pool = cfg.pool_blocks.contains(&block_id).then_some(cfg.pool_window);
                blocks.push(ConvBlock::new(
                    in_ch,
                    cfg.input_kernels[branch],
                    cfg.input_ksize,
                    pool,
                    &cfg,
                    &mut rng,
                )?);
                in_ch = cfg.input_kernels[branch];
            }
            input_branches.push(blocks);
        }
        let trunk_ch = cfg.trunk_channels();
        let flat = cfg.flat_size();
        let mut output_branches = Vec::with_capacity(OUTPUT_BRANCHES);
        for _ in 0..OUTPUT_BRANCHES {
            let mut blocks = Vec::with_capacity(cfg.output_blocks);
            let mut in_ch = trunk_ch;
            for _ in 0..cfg.output_blocks {
                blocks.push(ConvBlock::new(
                    in_ch,
                    cfg.output_kernels,
                    cfg.output_ksize,
                    None,
                    &cfg,
                    &mut rng,
                )?);
                in_ch = cfg.output_kernels;
            }
            output_branches.push(OutputBranch {
                blocks,
                fc1: Linear::new(flat, cfg.fc_hidden, &mut rng),
                fc2: Linear::new(cfg.fc_hidden, cfg.fc_hidden, &mut rng),
                fc3: Linear::new(OUTPUT_BRANCHES * cfg.fc_hidden, cfg.fc_hidden, &mut rng),
                fc4: Linear::new(cfg.fc_hidden, 2, &mut rng),
            });
        }
        Ok(StarNetwork { cfg, input_branches, output_branches })
    }

    /// Runs the network, returning per-branch 2-class logits and the tape for
    /// `backward`. Train mode uses batch statistics in batchnorm and updates
    /// the running estimates.
    pub fn forward(
        &mut self,
        batch: &DescriptorBatch<F>,
        train: bool,
    ) -> Result<([Array2<F>; 4], StarTape<F>)> {
        self.forward_inner(batch, train, train, None)
    }

    /// Forward without updating batchnorm running statistics (gradient
    /// checking evaluates train-mode statistics without mutating them).
    pub fn forward_frozen(
        &mut self,
        batch: &DescriptorBatch<F>,
        train: bool,
    ) -> Result<([Array2<F>; 4], StarTape<F>)> {
        self.forward_inner(batch, train, false, None)
    }

    /// Forward in which every branch's FC3 sees the *other* branches' FC2
    /// features held constant at `frozen_h` while its own slice stays live.
    ///
    /// The derivative of this function is exactly what `backward` computes
    /// through the one-way cross links, so finite differences of this forward
    /// are the correct oracle for the detached gradients. At the parameters
    /// that produced `frozen_h` its value coincides with the plain forward.
    pub fn forward_cross_frozen(
        &mut self,
        batch: &DescriptorBatch<F>,
        train: bool,
        frozen_h: &[Array2<F>; 4],
    ) -> Result<[Array2<F>; 4]> {
        Ok(self.forward_inner(batch, train, false, Some(frozen_h))?.0)
    }

    fn forward_inner(
        &mut self,
        batch: &DescriptorBatch<F>,
        train: bool,
        update_running: bool,
        frozen_cross: Option<&[Array2<F>; 4]>,
    ) -> Result<([Array2<F>; 4], StarTape<F>)> {
        let b = batch.batch_size();
        for (branch, t) in batch.channels.iter().enumerate() {
            let (bb, c, n) = t.dim();
            if bb != b || c != self.cfg.in_channels[branch] || n != self.cfg.n {
                return Err(Error::ShapeMismatch(format!(
                    "input branch {branch}: expected ({b}, {}, {}), got ({bb}, {c}, {n})",
                    self.cfg.in_channels[branch],
                    self.cfg.n
                )));
            }
        }
        // input branches
        let mut input_blocks = Vec::with_capacity(INPUT_BRANCHES);
        let mut feats = Vec::with_capacity(INPUT_BRANCHES);
        for (branch, blocks) in self.input_branches.iter_mut().enumerate() {
            let mut x = batch.channels[branch].clone();
            let mut caches = Vec::with_capacity(blocks.len());
            for block in blocks.iter_mut() {
                let (y, cache) = block.forward(x, train, update_running)?;
                caches.push(cache);
                x = y;
            }
            input_blocks.push(caches);
            feats.push(x);
        }
        // channel concatenation
        let trunk_len = feats[0].dim().2;
        let trunk_ch = self.cfg.trunk_channels();
        let mut trunk = Array3::zeros((b, trunk_ch, trunk_len));
        let mut c0 = 0;
        for f in &feats {
            let c = f.dim().1;
            trunk.slice_mut(s![.., c0..c0 + c, ..]).assign(f);
            c0 += c;
        }
        // output branches up to FC2
        let mut outputs = Vec::with_capacity(OUTPUT_BRANCHES);
        for branch in self.output_branches.iter_mut() {
            let mut x = trunk.clone();
            let mut caches = Vec::with_capacity(branch.blocks.len());
            for block in branch.blocks.iter_mut() {
                let (y, cache) = block.forward(x, train, update_running)?;
                caches.push(cache);
                x = y;
            }
            let (bb, c, l) = x.dim();
            let flat = x.into_shape_with_order((bb, c * l)).unwrap();
            let a1 = relu2(&branch.fc1.forward(&flat)?);
            let a2 = relu2(&branch.fc2.forward(&a1)?);
            outputs.push(OutputTape { blocks: caches, flat, a1, a2, a3: Array2::zeros((0, 0)) });
        }
        // shared late features
        let h = self.cfg.fc_hidden;
        let mut concat_h = Array2::zeros((b, OUTPUT_BRANCHES * h));
        for (o, tape) in outputs.iter().enumerate() {
            concat_h.slice_mut(s![.., o * h..(o + 1) * h]).assign(&tape.a2);
        }
        // per-branch heads
        let mut logits: Vec<Array2<F>> = Vec::with_capacity(OUTPUT_BRANCHES);
        for (o, branch) in self.output_branches.iter_mut().enumerate() {
            let fc3_in = match frozen_cross {
                None => concat_h.clone(),
                Some(frozen) => {
                    // other branches' slices pinned to their frozen values
                    let mut m = Array2::zeros((b, OUTPUT_BRANCHES * h));
                    for (j, fh) in frozen.iter().enumerate() {
                        m.slice_mut(s![.., j * h..(j + 1) * h]).assign(fh);
                    }
                    m.slice_mut(s![.., o * h..(o + 1) * h]).assign(&outputs[o].a2);
                    m
                }
            };
            let a3 = relu2(&branch.fc3.forward(&fc3_in)?);
            logits.push(branch.fc4.forward(&a3)?);
            outputs[o].a3 = a3;
        }
        let tape = StarTape {
            input_blocks,
            outputs,
            concat_h,
            trunk_dim: (b, trunk_ch, trunk_len),
        };
        let logits: [Array2<F>; 4] = logits.try_into().expect("four output branches");
        Ok((logits, tape))
    }

    /// Backpropagates the four per-branch logit gradients, accumulating
    /// parameter gradients. Cross-branch links are detached: branch `o` only
    /// receives its own slice of the FC2 concatenation gradient.
    pub fn backward(&mut self, tape: &StarTape<F>, dlogits: &[Array2<F>; 4]) -> Result<()> {
        let (b, trunk_ch, trunk_len) = tape.trunk_dim;
        let h = self.cfg.fc_hidden;
        let mut d_trunk = Array3::zeros((b, trunk_ch, trunk_len));
        for (o, branch) in self.output_branches.iter_mut().enumerate() {
            let tape_o = &tape.outputs[o];
            let d_a3 = branch.fc4.backward(&tape_o.a3, &dlogits[o]);
            let d_z3 = relu2_backward(&tape_o.a3, &d_a3);
            let d_concat = branch.fc3.backward(&tape.concat_h, &d_z3);
            // gradient stop: keep only this branch's own slice
            let d_a2 = d_concat.slice(s![.., o * h..(o + 1) * h]).to_owned();
            let d_z2 = relu2_backward(&tape_o.a2, &d_a2);
            let d_a1 = branch.fc2.backward(&tape_o.a1, &d_z2);
            let d_z1 = relu2_backward(&tape_o.a1, &d_a1);
            let d_flat = branch.fc1.backward(&tape_o.flat, &d_z1);
            let c = self.cfg.output_kernels;
            let l = tape_o.blocks.last().unwrap().relu_out.dim().2;
            let mut d = d_flat.into_shape_with_order((b, c, l)).unwrap();
            for (block, cache) in branch.blocks.iter_mut().zip(&tape_o.blocks).rev() {
                d = block.backward(cache, &d);
            }
            d_trunk.zip_mut_with(&d, |a, &g| *a += g);
        }
        // split the trunk gradient back onto the input branches
        let mut c0 = 0;
        for (branch, blocks) in self.input_branches.iter_mut().enumerate() {
            let c = self.cfg.input_kernels[branch];
            let mut d = d_trunk.slice(s![.., c0..c0 + c, ..]).to_owned();
            c0 += c;
            for (block, cache) in blocks.iter_mut().zip(&tape.input_blocks[branch]).rev() {
                d = block.backward(cache, &d);
            }
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for blocks in &mut self.input_branches {
            for b in blocks {
                b.zero_grad();
            }
        }
        for branch in &mut self.output_branches {
            for b in &mut branch.blocks {
                b.zero_grad();
            }
            branch.fc1.zero_grad();
            branch.fc2.zero_grad();
            branch.fc3.zero_grad();
            branch.fc4.zero_grad();
        }
    }

    /// Visits every (parameter, gradient) pair in a fixed canonical order:
    /// input branches (xyz..wmparc, block order, conv weight/bias then
    /// batchnorm gamma/beta), then output branches (TQ..AIF, blocks, FC1..4).
    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_, F>) {
        for blocks in &mut self.input_branches {
            for b in blocks {
                b.visit_params(f);
            }
        }
        for branch in &mut self.output_branches {
            for b in &mut branch.blocks {
                b.visit_params(f);
            }
            branch.fc1.visit_params(f);
            branch.fc2.visit_params(f);
            branch.fc3.visit_params(f);
            branch.fc4.visit_params(f);
        }
    }

    /// Visits only the parameters of output branch `o` (used by the
    /// gradient-stop tests).
    pub fn visit_output_branch_params(&mut self, o: usize, f: &mut ParamVisitor<'_, F>) {
        let branch = &mut self.output_branches[o];
        for b in &mut branch.blocks {
            b.visit_params(f);
        }
        branch.fc1.visit_params(f);
        branch.fc2.visit_params(f);
        branch.fc3.visit_params(f);
        branch.fc4.visit_params(f);
    }

    pub fn param_count(&mut self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |w, _| n += w.len());
        n
    }

    pub fn params_flat(&mut self) -> Vec<F> {
        let mut out = Vec::new();
        self.visit_params(&mut |w, _| out.extend_from_slice(w));
        out
    }

    pub fn grads_flat(&mut self) -> Vec<F> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, g| out.extend_from_slice(g));
        out
    }

    pub fn add_to_param(&mut self, target: usize, delta: F) {
        let mut idx = 0usize;
        self.visit_params(&mut |w, _| {
            if target >= idx && target < idx + w.len() {
                w[target - idx] = w[target - idx] + delta;
            }
            idx += w.len();
        });
    }

    pub fn set_params_flat(&mut self, values: &[F]) {
        let mut idx = 0usize;
        self.visit_params(&mut |w, _| {
            w.copy_from_slice(&values[idx..idx + w.len()]);
            idx += w.len();
        });
    }

    /// Named tensors for checkpointing: every parameter plus the batchnorm
    /// running statistics.
    pub fn state_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = Vec::new();
        let conv = |name: &str, c: &Conv1d<F>, out: &mut Vec<(String, Vec<usize>, Vec<f64>)>| {
            out.push((
                format!("{name}.conv.w"),
                c.weight.shape().to_vec(),
                c.weight.iter().map(|v| v.to_f64().unwrap()).collect(),
            ));
            out.push((
                format!("{name}.conv.b"),
                vec![c.bias.len()],
                c.bias.iter().map(|v| v.to_f64().unwrap()).collect(),
            ));
        };
        let bn = |name: &str, b: &BatchNorm1d<F>, out: &mut Vec<(String, Vec<usize>, Vec<f64>)>| {
            for (suffix, arr) in [
                ("bn.gamma", &b.gamma),
                ("bn.beta", &b.beta),
                ("bn.rmean", &b.running_mean),
                ("bn.rvar", &b.running_var),
            ] {
                out.push((
                    format!("{name}.{suffix}"),
                    vec![arr.len()],
                    arr.iter().map(|v| v.to_f64().unwrap()).collect(),
                ));
            }
        };
        let lin = |name: &str, l: &Linear<F>, out: &mut Vec<(String, Vec<usize>, Vec<f64>)>| {
            out.push((
                format!("{name}.w"),
                l.weight.shape().to_vec(),
                l.weight.iter().map(|v| v.to_f64().unwrap()).collect(),
            ));
            out.push((
                format!("{name}.b"),
                vec![l.bias.len()],
                l.bias.iter().map(|v| v.to_f64().unwrap()).collect(),
            ));
        };
        for (bi, blocks) in self.input_branches.iter().enumerate() {
            for (blk, b) in blocks.iter().enumerate() {
                let name = format!("in{bi}.blk{blk}");
                conv(&name, &b.conv, &mut out);
                bn(&name, &b.bn, &mut out);
            }
        }
        for (oi, branch) in self.output_branches.iter().enumerate() {
            for (blk, b) in branch.blocks.iter().enumerate() {
                let name = format!("out{oi}.blk{blk}");
                conv(&name, &b.conv, &mut out);
                bn(&name, &b.bn, &mut out);
            }
            lin(&format!("out{oi}.fc1"), &branch.fc1, &mut out);
            lin(&format!("out{oi}.fc2"), &branch.fc2, &mut out);
            lin(&format!("out{oi}.fc3"), &branch.fc3, &mut out);
            lin(&format!("out{oi}.fc4"), &branch.fc4, &mut out);
        }
        out
    }

    /// Restores tensors produced by `state_tensors`. Shapes must match the
    /// constructed architecture exactly.
    pub fn load_state_tensors(&mut self, tensors: &[(String, Vec<usize>, Vec<f64>)]) -> Result<()> {
        use std::collections::HashMap;
        let map: HashMap<&str, &(String, Vec<usize>, Vec<f64>)> =
            tensors.iter().map(|t| (t.0.as_str(), t)).collect();
        let expected = self.state_tensors();
        if expected.len() != tensors.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} tensors, architecture needs {}",
                tensors.len(),
                expected.len()
            )));
        }
        let mut values: HashMap<String, Vec<F>> = HashMap::new();
        for (name, shape, _) in &expected {
            let t = map.get(name.as_str()).ok_or_else(|| {
                Error::invalid(format!("checkpoint is missing tensor {name}"))
            })?;
            if &t.1 != shape {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {name}: checkpoint shape {:?}, architecture shape {shape:?}",
                    t.1
                )));
            }
            values.insert(
                name.clone(),
                t.2.iter().map(|&v| F::from(v).unwrap()).collect(),
            );
        }
        let set3 = |arr: &mut Array3<F>, v: &[F]| {
            arr.as_slice_mut().unwrap().copy_from_slice(v);
        };
        let set2 = |arr: &mut Array2<F>, v: &[F]| {
            arr.as_slice_mut().unwrap().copy_from_slice(v);
        };
        let set1 = |arr: &mut ndarray::Array1<F>, v: &[F]| {
            arr.as_slice_mut().unwrap().copy_from_slice(v);
        };
        for (bi, blocks) in self.input_branches.iter_mut().enumerate() {
            for (blk, b) in blocks.iter_mut().enumerate() {
                let name = format!("in{bi}.blk{blk}");
                set3(&mut b.conv.weight, &values[&format!("{name}.conv.w")]);
                set1(&mut b.conv.bias, &values[&format!("{name}.conv.b")]);
                set1(&mut b.bn.gamma, &values[&format!("{name}.bn.gamma")]);
                set1(&mut b.bn.beta, &values[&format!("{name}.bn.beta")]);
                set1(&mut b.bn.running_mean, &values[&format!("{name}.bn.rmean")]);
                set1(&mut b.bn.running_var, &values[&format!("{name}.bn.rvar")]);
            }
        }
        for (oi, branch) in self.output_branches.iter_mut().enumerate() {
            for (blk, b) in branch.blocks.iter_mut().enumerate() {
                let name = format!("out{oi}.blk{blk}");
                set3(&mut b.conv.weight, &values[&format!("{name}.conv.w")]);
                set1(&mut b.conv.bias, &values[&format!("{name}.conv.b")]);
                set1(&mut b.bn.gamma, &values[&format!("{name}.bn.gamma")]);
                set1(&mut b.bn.beta, &values[&format!("{name}.bn.beta")]);
                set1(&mut b.bn.running_mean, &values[&format!("{name}.bn.rmean")]);
                set1(&mut b.bn.running_var, &values[&format!("{name}.bn.rvar")]);
            }
            for (fc_name, fc) in [
                ("fc1", &mut branch.fc1),
                ("fc2", &mut branch.fc2),
                ("fc3", &mut branch.fc3),
                ("fc4", &mut branch.fc4),
            ] {
                let name = format!("out{oi}.{fc_name}");
                set2(&mut fc.weight, &values[&format!("{name}.w")]);
                set1(&mut fc.bias, &values[&format!("{name}.b")]);
            }
        }
        Ok(())
    }
}
