//! Synthetic training traces.
//!
//! One training iteration is emitted as a raw op stream and paired through
//! the regular ingestion path:
//!
//! * `init`: persistent weights, gradients and optimizer state.
//! * forward units `F:m[.c]`: per layer, the palette of activation sizes in a
//!   fixed seeded order (largest last), each optionally preceded by a
//!   same-size transient that dies right after the activation is allocated.
//! * backward units `B:m[.c]`: layers in reverse; a gradient chain frees
//!   activations in reverse allocation order.
//! * `opt`: a short-lived workspace.
//!
//! Recompute presets keep one checkpoint per layer across the phase pair and
//! turn forward activations into phase-local tensors that are rebuilt in the
//! backward. VPP presets split layers into chunks and interleave chunk units.
//! MoE presets add dynamic expert tensors with runtime-sampled sizes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{pair_records, RawOpRecord};
use crate::model::{PhaseId, Trace, DEFAULT_ALIGNMENT};

const MIB: u64 = 1 << 20;
const KIB: u64 = 1 << 10;

/// Activation sizes used when no palette is given.
pub const DEFAULT_PALETTE: [u64; 6] = [MIB, 3 * MIB / 2, 5 * MIB / 2, 3 * MIB, 5 * MIB, 6 * MIB];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Dense,
    DenseRecompute,
    DenseVpp,
    DenseVppRecompute,
    Moe,
    MoeRecompute,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Dense,
        Preset::DenseRecompute,
        Preset::DenseVpp,
        Preset::DenseVppRecompute,
        Preset::Moe,
        Preset::MoeRecompute,
    ];

    pub fn recompute(self) -> bool {
        matches!(
            self,
            Preset::DenseRecompute | Preset::DenseVppRecompute | Preset::MoeRecompute
        )
    }

    pub fn vpp(self) -> bool {
        matches!(self, Preset::DenseVpp | Preset::DenseVppRecompute)
    }

    pub fn moe(self) -> bool {
        matches!(self, Preset::Moe | Preset::MoeRecompute)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Dense => "dense",
            Preset::DenseRecompute => "dense_recompute",
            Preset::DenseVpp => "dense_vpp",
            Preset::DenseVppRecompute => "dense_vpp_recompute",
            Preset::Moe => "moe",
            Preset::MoeRecompute => "moe_recompute",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {s:?}")))
    }
}

/// Uniform size range for dynamic expert tensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoeSizes {
    pub min: u64,
    pub max: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub preset: Preset,
    pub num_layers: u32,
    pub num_microbatches: u32,
    /// Virtual-pipeline chunks; must be 1 unless the preset is a VPP one.
    pub num_chunks: u32,
    /// Forward units in flight before the first backward (scaled by chunks).
    pub pipeline_depth: u32,
    pub distinct_sizes: usize,
    pub size_palette: Vec<u64>,
    pub persistent_bytes: u64,
    pub transient_ratio: f64,
    pub moe_size_distribution: Option<MoeSizes>,
    pub moe_tensors_per_layer: u32,
    pub alignment: u64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn preset(preset: Preset) -> Self {
        SynthConfig {
            preset,
            num_layers: 16,
            num_microbatches: 4,
            num_chunks: if preset.vpp() { 2 } else { 1 },
            pipeline_depth: 2,
            distinct_sizes: DEFAULT_PALETTE.len(),
            size_palette: DEFAULT_PALETTE.to_vec(),
            persistent_bytes: 32 * MIB,
            transient_ratio: 0.3,
            moe_size_distribution: preset.moe().then_some(MoeSizes {
                min: 256 * KIB,
                max: 4 * MIB,
                seed: 0,
            }),
            moe_tensors_per_layer: 2,
            alignment: DEFAULT_ALIGNMENT,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_shape(mut self, layers: u32, microbatches: u32) -> Self {
        self.num_layers = layers;
        self.num_microbatches = microbatches;
        self
    }

    /// Replaces the palette and keeps `distinct_sizes` in step.
    pub fn with_palette(mut self, palette: Vec<u64>) -> Self {
        self.distinct_sizes = palette.len();
        self.size_palette = palette;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.num_layers == 0 || self.num_microbatches == 0 || self.pipeline_depth == 0 {
            return fail("layers, microbatches and pipeline depth must be positive");
        }
        if self.num_chunks == 0 {
            return fail("num_chunks must be at least 1");
        }
        if !self.preset.vpp() && self.num_chunks != 1 {
            return fail("num_chunks > 1 requires a vpp preset");
        }
        if self.num_chunks > self.num_layers {
            return fail("more chunks than layers");
        }
        if self.alignment == 0 {
            return fail("alignment must be positive");
        }
        if self.size_palette.is_empty() || self.distinct_sizes != self.size_palette.len() {
            return fail("distinct_sizes must equal the palette length");
        }
        let mut sorted = self.size_palette.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.size_palette.len() {
            return fail("palette sizes must be distinct");
        }
        if sorted.iter().any(|&s| s == 0 || s % self.alignment != 0) {
            return fail("palette sizes must be positive multiples of the alignment");
        }
        if !(0.0..=1.0).contains(&self.transient_ratio) {
            return fail("transient_ratio must lie in [0, 1]");
        }
        if self.preset.moe() {
            match self.moe_size_distribution {
                Some(d) if d.min > 0 && d.min <= d.max => {}
                _ => return fail("moe preset needs a non-empty size distribution"),
            }
            if self.moe_tensors_per_layer == 0 {
                return fail("moe preset needs at least one expert tensor per layer");
            }
        }
        Ok(())
    }
}

/// What a generated tensor stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Persistent,
    Checkpoint,
    Activation,
    Transient,
    Gradient,
    Expert,
    Workspace,
}

#[derive(Debug, Clone)]
pub struct LabeledTrace {
    pub trace: Trace,
    pub roles: HashMap<u64, Role>,
}

pub fn synth_trace(config: &SynthConfig) -> Result<Trace> {
    synth_labeled(config).map(|l| l.trace)
}

/// Like [`synth_trace`] but also reports the role of every event id.
pub fn synth_labeled(config: &SynthConfig) -> Result<LabeledTrace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // per-layer slot order: shuffled, largest last
    let mut order = config.size_palette.clone();
    order.shuffle(&mut rng);
    let max_pos = order
        .iter()
        .enumerate()
        .max_by_key(|(_, &s)| s)
        .map(|(i, _)| i)
        .unwrap();
    let largest = order.remove(max_pos);
    order.push(largest);
    let transient_before: Vec<bool> = (0..order.len())
        .map(|i| i + 1 < order.len() && rng.gen_bool(config.transient_ratio))
        .collect();

    let expert_sizes = sample_expert_sizes(config);

    let mut b = Builder::default();
    let layers = config.num_layers;
    let per_layer = (3 * u64::from(layers)).max(1);
    let chunk = crate::model::align_up(config.persistent_bytes.div_ceil(per_layer), config.alignment);
    if chunk > 0 {
        for k in 0..layers {
            for _ in 0..3 {
                b.alloc(chunk, PhaseId::INIT, &format!("layers.{k}"), false, Role::Persistent);
            }
        }
    } else {
        b.alloc(config.alignment, PhaseId::INIT, "", false, Role::Persistent);
    }

    let gen = Gen {
        config,
        order: &order,
        transient_before: &transient_before,
        expert_sizes: &expert_sizes,
    };
    let mut state: HashMap<(u32, u32), MicrobatchState> = HashMap::new();
    for unit in schedule(config) {
        match unit {
            Unit::Forward(m, c) => gen.forward(&mut b, m, c, state.entry((m, c)).or_default()),
            Unit::Backward(m, c) => {
                let st = state.remove(&(m, c)).unwrap_or_default();
                gen.backward(&mut b, m, c, st)
            }
        }
    }

    let ws = b.alloc(largest, PhaseId::OPT, "optimizer", false, Role::Workspace);
    b.free(ws, PhaseId::OPT, "optimizer");

    let trace = pair_records(&b.records, config.alignment, None)?;
    Ok(LabeledTrace { trace, roles: b.roles })
}

fn sample_expert_sizes(config: &SynthConfig) -> Vec<Vec<Vec<u64>>> {
    let Some(dist) = config.moe_size_distribution.filter(|_| config.preset.moe()) else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(dist.seed ^ config.seed.rotate_left(32));
    let (lo, hi) = (
        crate::model::align_up(dist.min, config.alignment),
        crate::model::align_up(dist.max, config.alignment),
    );
    (0..config.num_microbatches)
        .map(|_| {
            (0..config.num_layers)
                .map(|_| {
                    (0..config.moe_tensors_per_layer)
                        .map(|_| crate::model::align_up(rng.gen_range(lo..=hi), config.alignment))
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[derive(Default)]
struct Builder {
    records: Vec<RawOpRecord>,
    roles: HashMap<u64, Role>,
    next_id: u64,
}

impl Builder {
    fn alloc(&mut self, size: u64, phase: PhaseId, module: &str, dynamic: bool, role: Role) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.records.push(RawOpRecord::alloc(id, size, phase, module, dynamic));
        self.roles.insert(id, role);
        id
    }

    fn free(&mut self, id: u64, phase: PhaseId, module: &str) {
        self.records.push(RawOpRecord::free(id, phase, module));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Forward(u32, u32),
    Backward(u32, u32),
}

/// 1F1B over (microbatch, chunk) units: microbatches go in groups of
/// `pipeline_depth`; within a group forward walks chunks upward and backward
/// walks them downward. After `depth × chunks` warmup forwards, backward and
/// forward units alternate.
fn schedule(config: &SynthConfig) -> Vec<Unit> {
    let (mbs, chunks, depth) = (config.num_microbatches, config.num_chunks, config.pipeline_depth);
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    for g in (0..mbs).step_by(depth as usize) {
        let group: Vec<u32> = (g..(g + depth).min(mbs)).collect();
        for c in 0..chunks {
            fwd.extend(group.iter().map(|&m| Unit::Forward(m, c)));
        }
        for c in (0..chunks).rev() {
            bwd.extend(group.iter().map(|&m| Unit::Backward(m, c)));
        }
    }
    let warmup = ((depth * chunks) as usize).min(fwd.len());
    let mut out: Vec<Unit> = fwd[..warmup].to_vec();
    let mut f = fwd[warmup..].iter();
    for &bu in &bwd {
        out.push(bu);
        if let Some(&fu) = f.next() {
            out.push(fu);
        }
    }
    out
}

#[derive(Default)]
struct MicrobatchState {
    /// Per layer: activation ids in allocation order (non-recompute).
    activations: Vec<(u32, Vec<(u64, u64)>)>,
    checkpoints: HashMap<u32, u64>,
    experts: HashMap<u32, Vec<u64>>,
}

struct Gen<'a> {
    config: &'a SynthConfig,
    order: &'a [u64],
    transient_before: &'a [bool],
    expert_sizes: &'a [Vec<Vec<u64>>],
}

impl Gen<'_> {
    fn chunk_layers(&self, c: u32) -> std::ops::Range<u32> {
        let (l, n) = (self.config.num_layers, self.config.num_chunks);
        (c * l / n)..((c + 1) * l / n)
    }

    fn phase(&self, forward: bool, m: u32, c: u32) -> PhaseId {
        if forward {
            PhaseId::forward(m, c)
        } else {
            PhaseId::backward(m, c)
        }
    }

    /// Allocates one layer's activations with their transients.
    fn layer_activations(&self, b: &mut Builder, phase: PhaseId, module: &str) -> Vec<(u64, u64)> {
        let mut acts = Vec::with_capacity(self.order.len());
        for (j, &size) in self.order.iter().enumerate() {
            let t = self.transient_before[j].then(|| b.alloc(size, phase, module, false, Role::Transient));
            acts.push((b.alloc(size, phase, module, false, Role::Activation), size));
            if let Some(t) = t {
                b.free(t, phase, module);
            }
        }
        acts
    }

    fn experts(&self, b: &mut Builder, m: u32, k: u32, phase: PhaseId) -> Vec<u64> {
        let module = format!("layers.{k}.experts");
        self.expert_sizes
            .get(m as usize)
            .map(|per_layer| {
                per_layer[k as usize]
                    .iter()
                    .map(|&s| b.alloc(s, phase, &module, true, Role::Expert))
                    .collect()
            })
            .unwrap_or_default()
    }

    fn free_experts(&self, b: &mut Builder, ids: Vec<u64>, k: u32, phase: PhaseId) {
        let module = format!("layers.{k}.experts");
        for id in ids.into_iter().rev() {
            b.free(id, phase, &module);
        }
    }

    fn forward(&self, b: &mut Builder, m: u32, c: u32, st: &mut MicrobatchState) {
        let phase = self.phase(true, m, c);
        let recompute = self.config.preset.recompute();
        let ckpt_size = *self.order.iter().min().unwrap();
        for k in self.chunk_layers(c) {
            let module = format!("layers.{k}");
            if recompute {
                st.checkpoints
                    .insert(k, b.alloc(ckpt_size, phase, &module, false, Role::Checkpoint));
            }
            let acts = self.layer_activations(b, phase, &module);
            let experts = self.experts(b, m, k, phase);
            if recompute {
                self.free_experts(b, experts, k, phase);
                for &(id, _) in acts.iter().rev() {
                    b.free(id, phase, &module);
                }
            } else {
                st.experts.insert(k, experts);
                st.activations.push((k, acts));
            }
        }
    }

    fn backward(&self, b: &mut Builder, m: u32, c: u32, mut st: MicrobatchState) {
        let phase = self.phase(false, m, c);
        let recompute = self.config.preset.recompute();
        let mut prev_grad: Option<u64> = None;
        for k in self.chunk_layers(c).rev() {
            let module = format!("layers.{k}");
            let (acts, experts) = if recompute {
                if let Some(ck) = st.checkpoints.remove(&k) {
                    b.free(ck, phase, &module);
                }
                let acts = self.layer_activations(b, phase, &module);
                (acts, self.experts(b, m, k, phase))
            } else {
                let acts = st
                    .activations
                    .pop()
                    .filter(|(layer, _)| *layer == k)
                    .map(|(_, a)| a)
                    .unwrap_or_default();
                (acts, st.experts.remove(&k).unwrap_or_default())
            };
            self.free_experts(b, experts, k, phase);
            for &(act, size) in acts.iter().rev() {
                let grad = b.alloc(size, phase, &module, false, Role::Gradient);
                b.free(act, phase, &module);
                if let Some(p) = prev_grad.replace(grad) {
                    b.free(p, phase, &module);
                }
            }
        }
        if let Some(p) = prev_grad {
            b.free(p, phase, "loss");
        }
    }
}
