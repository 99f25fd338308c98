//! `combnet verify`: oracle-equivalence and gradient suites.
//!
//! Every suite is driven by one seeded generator, so a given seed always
//! yields the same report text.

use std::fmt::Write as _;

use combnet_core::config::Config;
use combnet_core::conv::{
    batchnorm, comb_dilated_conv_counted, comb_dilated_conv_packed, conv2d_packed_counted, conv2d_ref_counted,
    fold_batchnorm, mac_count, zero_stuffed_dilated_conv_counted, BnParams, ConvSpec, OpCounter, Padding,
};
use combnet_core::graph::{forward_reference_counted, init_weights, HeadSet, HeadsOutput, PreparedNet};
use combnet_core::loss::gradcheck::{central_difference, relative_error};
use combnet_core::loss::{
    aux_keypoint_ce, deep_supervision_loss, handpose_ce, keypoint_ce, orientation_ce_soft, seg_ce, total_loss,
    visibility_bce, HeatmapLogits, KeypointTarget, LossBundle, SegLabels,
};
use combnet_core::tensor::{pack_kernels, to_interleaved, to_planar, ConvWeights, Dims, Layout, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{graph_for, CliError, CliResult};

pub const PACKED_TOL: f64 = 1e-5;
pub const COMB_TOL: f64 = 1e-6;
pub const BN_TOL: f64 = 1e-5;
pub const BACKEND_TOL: f64 = 1e-4;
pub const GRAD_TOL: f64 = 1e-4;
pub const CLOSED_FORM_TOL: f64 = 1e-9;
/// Top-2 heatmap margin above which decoded keypoints must agree.
pub const ARGMAX_MARGIN: f32 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Random convolution cases for the oracle suites.
    pub cases: usize,
    /// Added to every packed kernel value before comparison.
    pub perturb: Option<f32>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: crate::DEFAULT_SEED,
            cases: 100,
            perturb: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub cases: usize,
    pub max_dev: f64,
    pub tol: f64,
    pub passed: bool,
    pub note: String,
}

impl SuiteResult {
    fn new(name: &'static str, cases: usize, max_dev: f64, tol: f64) -> Self {
        Self {
            name,
            cases,
            max_dev,
            tol,
            // NaN deviations fail
            passed: max_dev <= tol,
            note: String::new(),
        }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.note = n.into();
        self
    }

    fn require(mut self, ok: bool, why: &str) -> Self {
        if !ok {
            self.passed = false;
            if !self.note.is_empty() {
                self.note.push_str("; ");
            }
            self.note.push_str(why);
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.passed)
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn failures(&self) -> Vec<&SuiteResult> {
        self.suites.iter().filter(|s| !s.passed).collect()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "{:<18} {:>6} {:>12} {:>10}  result", "suite", "cases", "max dev", "tol");
        for r in &self.suites {
            let _ = write!(
                s,
                "{:<18} {:>6} {:>12.3e} {:>10.1e}  {}",
                r.name,
                r.cases,
                r.max_dev,
                r.tol,
                if r.passed { "PASS" } else { "FAIL" }
            );
            if !r.note.is_empty() {
                let _ = write!(s, "  ({})", r.note);
            }
            let _ = writeln!(s);
        }
        let _ = writeln!(s, "{}", if self.passed() { "all suites passed" } else { "FAILED" });
        s
    }
}

/// One randomized convolution problem.
#[derive(Debug, Clone)]
pub struct ConvCase {
    pub spec: ConvSpec,
    pub lane_width: usize,
    pub input: Tensor,
    pub weights: ConvWeights,
    pub bias: Option<Vec<f32>>,
}

impl ConvCase {
    pub fn describe(&self) -> String {
        let s = &self.spec;
        let d = self.input.dims();
        format!(
            "{}x{} {}->{} k{} s{} d{} g{} {:?}",
            d.h, d.w, s.in_ch, s.out_ch, s.kernel.0, s.stride, s.dilation, s.groups, s.padding
        )
    }

    /// The same problem at stride 1 with same-padding, as the comb path needs.
    pub fn for_comb(&self) -> ConvCase {
        ConvCase {
            spec: self.spec.stride(1).padding(Padding::Same),
            ..self.clone()
        }
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lim: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-lim..=lim)).collect()
}

/// Case `index` cycles groups over {1, 4, 8, C}, then dilation over 1..=4,
/// then stride over {1, 2}; everything else is drawn from `rng`.
pub fn random_conv_case(rng: &mut ChaCha8Rng, index: usize) -> ConvCase {
    let (in_ch, out_ch, groups) = match index % 4 {
        0 => (rng.gen_range(1..=12), rng.gen_range(1..=12), 1),
        1 => (4 * rng.gen_range(1..=3), 4 * rng.gen_range(1..=4), 4),
        2 => (8 * rng.gen_range(1..=2), 8 * rng.gen_range(1..=3), 8),
        _ => {
            let c = rng.gen_range(2..=16);
            (c, c, c)
        }
    };
    let dilation = 1 + (index / 4) % 4;
    let stride = 1 + (index / 16) % 2;
    let k = [1, 3, 3, 5][rng.gen_range(0..4)];
    let padding = if rng.gen_bool(0.75) { Padding::Same } else { Padding::Valid };
    let has_bias = rng.gen_bool(0.5);
    let spec = ConvSpec::new(in_ch, out_ch, k)
        .groups(groups)
        .dilation(dilation)
        .stride(stride)
        .padding(padding)
        .bias(has_bias);
    let eff = dilation * (k - 1) + 1;
    let h = eff + rng.gen_range(0..=10);
    let w = eff + rng.gen_range(0..=10);
    let input = Tensor::from_vec(
        Dims::chw(in_ch, h, w),
        Layout::ChannelPlanar,
        uniform_vec(rng, in_ch * h * w, 1.0),
    )
    .expect("sized to dims");
    // fan-in scaling keeps outputs O(1), so absolute tolerances are meaningful
    let lim = 1.0 / ((in_ch / groups * k * k) as f32).sqrt();
    let weights = ConvWeights::new(out_ch, in_ch / groups, k, k, uniform_vec(rng, spec.weight_len(), lim))
        .expect("sized to spec");
    let bias = has_bias.then(|| uniform_vec(rng, out_ch, 1.0));
    let lane_width = [1, 3, 4, 8][rng.gen_range(0..4)];
    ConvCase {
        spec,
        lane_width,
        input,
        weights,
        bias,
    }
}

fn max_dev(a: &Tensor, b: &Tensor) -> CliResult<f64> {
    Ok(a.max_abs_diff(b)? as f64)
}

/// Packed kernel path vs the reference convolution.
pub fn packed_deviation(c: &ConvCase, perturb: Option<f32>) -> CliResult<f64> {
    let mut cnt = OpCounter::default();
    let expect = conv2d_ref_counted(&c.input, &c.weights, c.bias.as_deref(), &c.spec, &mut cnt)?;
    let mut packed = pack_kernels(&c.weights, c.spec.groups, c.lane_width)?;
    if let Some(d) = perturb {
        packed.data.iter_mut().for_each(|v| *v += d);
    }
    let x = to_interleaved(&c.input)?;
    let got = conv2d_packed_counted(&x, &packed, c.bias.as_deref(), &c.spec, &mut OpCounter::default(), false)?;
    max_dev(&to_planar(&got)?, &expect)
}

/// Field-wise comb path vs the reference; also returns whether its
/// multiply count equals `mac_count`.
pub fn comb_deviation(c: &ConvCase) -> CliResult<(f64, bool)> {
    let c = c.for_comb();
    let d = c.input.dims();
    let expect = conv2d_ref_counted(&c.input, &c.weights, c.bias.as_deref(), &c.spec, &mut OpCounter::default())?;
    let mut cnt = OpCounter::default();
    let got = comb_dilated_conv_counted(&c.input, &c.weights, c.bias.as_deref(), &c.spec, &mut cnt)?;
    let macs_ok = cnt.macs == mac_count(&c.spec, d.h, d.w)?;
    Ok((max_dev(&got, &expect)?, macs_ok))
}

/// Comb path on packed kernels and interleaved data, as the optimized
/// backend runs it, vs the reference.
pub fn packed_comb_deviation(c: &ConvCase, perturb: Option<f32>) -> CliResult<f64> {
    let c = c.for_comb();
    let expect = conv2d_ref_counted(&c.input, &c.weights, c.bias.as_deref(), &c.spec, &mut OpCounter::default())?;
    let mut packed = pack_kernels(&c.weights, c.spec.groups, c.lane_width)?;
    if let Some(p) = perturb {
        packed.data.iter_mut().for_each(|v| *v += p);
    }
    let got = comb_dilated_conv_packed(
        &to_interleaved(&c.input)?,
        &packed,
        c.bias.as_deref(),
        &c.spec,
        &mut OpCounter::default(),
        false,
    )?;
    max_dev(&to_planar(&got)?, &expect)
}

/// Multiply counts `(comb, zero-stuffed, mac_count)` for a dilated 3x3
/// convolution at `12 x 12`, 32 -> 32 channels, 8 groups.
pub fn comb_mac_counts(d: usize, seed: u64) -> CliResult<(u64, u64, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ConvSpec::new(32, 32, 3).groups(8).dilation(d).bias(false);
    let x = Tensor::from_vec(Dims::chw(32, 12, 12), Layout::ChannelPlanar, uniform_vec(&mut rng, 32 * 144, 1.0))?;
    let w = ConvWeights::new(32, 4, 3, 3, uniform_vec(&mut rng, spec.weight_len(), 1.0))?;
    let mut comb = OpCounter::default();
    comb_dilated_conv_counted(&x, &w, None, &spec, &mut comb)?;
    let mut stuffed = OpCounter::default();
    zero_stuffed_dilated_conv_counted(&x, &w, None, &spec, &mut stuffed)?;
    Ok((comb.macs, stuffed.macs, mac_count(&spec, 12, 12)?))
}

/// Conv + batch norm vs the convolution with batch norm folded in.
pub fn bn_fold_deviation(rng: &mut ChaCha8Rng, index: usize) -> CliResult<f64> {
    let c = random_conv_case(rng, index);
    let ch = c.spec.out_ch;
    let bn = BnParams {
        gamma: (0..ch).map(|_| rng.gen_range(0.5..1.5)).collect(),
        beta: uniform_vec(rng, ch, 0.5),
        running_mean: uniform_vec(rng, ch, 0.5),
        running_var: (0..ch).map(|_| rng.gen_range(0.5..2.0)).collect(),
        epsilon: 1e-5,
    };
    let mut cnt = OpCounter::default();
    let y = conv2d_ref_counted(&c.input, &c.weights, c.bias.as_deref(), &c.spec, &mut cnt)?;
    let unfolded = batchnorm(&y, &bn, &mut cnt)?;
    let (fw, fb) = fold_batchnorm(&c.weights, c.bias.as_deref(), &bn)?;
    let folded = conv2d_ref_counted(&c.input, &fw, Some(&fb), &c.spec.bias(true), &mut cnt)?;
    max_dev(&unfolded, &folded)
}

/// Outcome of one seeded full forward on both backends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackendAgreement {
    pub max_dev: f64,
    /// Heatmaps whose top-2 margin is at least [`ARGMAX_MARGIN`].
    pub decisive_maps: usize,
    /// Decisive heatmaps whose argmax differs between backends.
    pub argmax_mismatches: usize,
}

fn top2(z: &[f32]) -> (usize, f32) {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate() {
        if v > z[best] {
            best = i;
        }
    }
    let second = z
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &v)| v)
        .fold(f32::NEG_INFINITY, f32::max);
    (best, z[best] - second)
}

fn argmax_agreement(a: &HeadsOutput, b: &HeadsOutput) -> (usize, usize) {
    let plane = a.primary.dims().plane();
    let mut decisive = 0;
    let mut mismatches = 0;
    for (za, zb) in a.primary.data().chunks_exact(plane).zip(b.primary.data().chunks_exact(plane)) {
        let (ia, margin) = top2(za);
        if margin >= ARGMAX_MARGIN {
            decisive += 1;
            mismatches += (top2(zb).0 != ia) as usize;
        }
    }
    (decisive, mismatches)
}

/// Reference vs optimized backend on a seeded network and image.
pub fn backend_agreement(cfg: &Config, seed: u64, heads: HeadSet, perturb: Option<f32>) -> CliResult<BackendAgreement> {
    let g = graph_for(cfg)?;
    let ws = init_weights(&g, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a2b);
    let (h, w) = g.input_hw;
    let image = Tensor::from_vec(
        Dims::chw(1, h, w),
        Layout::ChannelPlanar,
        (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )?;
    let (reference, _) = forward_reference_counted(&g, &ws, &image, heads)?;
    let mut net = PreparedNet::new(&g, &ws, cfg.network.lane_width)?;
    if let Some(d) = perturb {
        net.perturb(d);
    }
    let optimized = net.forward(&image, heads)?;
    let (decisive_maps, argmax_mismatches) = argmax_agreement(&reference, &optimized);
    Ok(BackendAgreement {
        max_dev: reference.max_abs_diff(&optimized)? as f64,
        decisive_maps,
        argmax_mismatches,
    })
}

fn logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()
}

fn targets(rng: &mut ChaCha8Rng, k: usize, h: usize, w: usize) -> Vec<KeypointTarget> {
    (0..k)
        .map(|_| {
            if rng.gen_bool(0.2) {
                KeypointTarget::default()
            } else {
                KeypointTarget::at(rng.gen_range(0..h), rng.gen_range(0..w)).fingertip(rng.gen_bool(0.3))
            }
        })
        .collect()
}

fn hand_labels(rng: &mut ChaCha8Rng, classes: usize) -> Vec<Option<usize>> {
    (0..2)
        .map(|_| (!rng.gen_bool(0.2)).then(|| rng.gen_range(0..classes)))
        .collect()
}

fn fd_error(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64]) -> f64 {
    relative_error(analytic, &central_difference(f, x, 1e-4))
}

/// Worst relative gradient error per loss over `instances` random inputs.
pub fn loss_gradient_errors(rng: &mut ChaCha8Rng, instances: usize) -> CliResult<Vec<(&'static str, f64)>> {
    let mut worst = vec![
        ("keypoint", 0.0f64),
        ("aux_keypoint", 0.0),
        ("visibility", 0.0),
        ("orientation", 0.0),
        ("handpose", 0.0),
        ("segmentation", 0.0),
        ("deep_supervision", 0.0),
    ];
    let mut bump = |i: usize, e: f64| worst[i].1 = worst[i].1.max(e);
    for _ in 0..instances {
        let (h, w) = (rng.gen_range(2..6), rng.gen_range(2..6));

        let z = logits(rng, 4 * h * w);
        let t = targets(rng, 4, h, w);
        let a = keypoint_ce(HeatmapLogits::new(&z, 4, h, w)?, &t)?;
        bump(0, fd_error(|v| keypoint_ce(HeatmapLogits::new(v, 4, h, w).unwrap(), &t).unwrap().loss, &z, &a.grad));

        let z = logits(rng, 18 * h * w);
        let t = targets(rng, 18, h, w);
        let a = aux_keypoint_ce(HeatmapLogits::new(&z, 18, h, w)?, &t)?;
        bump(1, fd_error(|v| aux_keypoint_ce(HeatmapLogits::new(v, 18, h, w).unwrap(), &t).unwrap().loss, &z, &a.grad));

        let z = logits(rng, 18);
        let y: Vec<bool> = (0..18).map(|_| rng.gen_bool(0.5)).collect();
        let a = visibility_bce(&z, &y)?;
        bump(2, fd_error(|v| visibility_bce(v, &y).unwrap().loss, &z, &a.grad));

        let z = logits(rng, 16);
        let l = hand_labels(rng, 8);
        let a = orientation_ce_soft(&z, &l, 0.1)?;
        bump(3, fd_error(|v| orientation_ce_soft(v, &l, 0.1).unwrap().loss, &z, &a.grad));

        let z = logits(rng, 18);
        let l = hand_labels(rng, 9);
        let a = handpose_ce(&z, &l)?;
        bump(4, fd_error(|v| handpose_ce(v, &l).unwrap().loss, &z, &a.grad));

        let z = logits(rng, 3 * h * w);
        let seg = SegLabels {
            h,
            w,
            labels: (0..h * w).map(|_| rng.gen_range(0..3)).collect(),
        };
        let a = seg_ce(&z, &seg)?;
        bump(5, fd_error(|v| seg_ce(v, &seg).unwrap().loss, &z, &a.grad));

        // three scales of an 8x8 input: 1x1, 2x2, 4x4
        let sizes = [1usize, 4, 16];
        let z: Vec<f64> = logits(rng, 2 * sizes.iter().sum::<usize>());
        let t = targets(rng, 2, 4, 4);
        let ds = |v: &[f64]| -> (f64, Vec<f64>) {
            let (a, rest) = v.split_at(2 * sizes[0]);
            let (b, c) = rest.split_at(2 * sizes[1]);
            let maps = [
                HeatmapLogits::new(a, 2, 1, 1).unwrap(),
                HeatmapLogits::new(b, 2, 2, 2).unwrap(),
                HeatmapLogits::new(c, 2, 4, 4).unwrap(),
            ];
            let parts = deep_supervision_loss(&maps, &t, (8, 8)).unwrap();
            let loss = parts.iter().map(|p| p.loss).sum();
            (loss, parts.into_iter().flat_map(|p| p.grad).collect())
        };
        let (_, grad) = ds(&z);
        bump(6, fd_error(|v| ds(v).0, &z, &grad));
    }
    Ok(worst)
}

/// Deviations of the closed-form loss examples, worst first-listed.
pub fn loss_closed_form_errors() -> CliResult<Vec<(&'static str, f64)>> {
    let zero = |n: usize| vec![0.0f64; n];
    let heat = zero(2304);
    let kp = keypoint_ce(HeatmapLogits::new(&heat, 1, 48, 48)?, &[KeypointTarget::at(0, 0)])?.loss;
    let vis = visibility_bce(&zero(18), &[true; 18])?.loss;
    let ori = orientation_ce_soft(&zero(16), &[Some(0), Some(5)], 0.1)?.loss;
    let pose = handpose_ce(&zero(18), &[Some(1), Some(8)])?.loss;
    let seg = seg_ce(
        &zero(3 * 16),
        &SegLabels {
            h: 4,
            w: 4,
            labels: vec![1; 16],
        },
    )?
    .loss;
    let (a, b, c) = (zero(16 * 144), zero(16 * 576), zero(16 * 2304));
    let maps = [
        HeatmapLogits::new(&a, 16, 12, 12)?,
        HeatmapLogits::new(&b, 16, 24, 24)?,
        HeatmapLogits::new(&c, 16, 48, 48)?,
    ];
    let mut t = vec![KeypointTarget::default(); 16];
    t[3] = KeypointTarget::at(20, 30);
    let ds: f64 = deep_supervision_loss(&maps, &t, (96, 96))?.iter().map(|p| p.loss).sum();
    let mut z8 = [0.0; 8];
    z8[0] = 1.0;
    let soft = orientation_ce_soft(&z8, &[Some(0)], 0.1)?.loss;
    let e = std::f64::consts::E;
    Ok(vec![
        ("ln 2304", (kp - 2304f64.ln()).abs()),
        ("ln 2", (vis - 2f64.ln()).abs()),
        ("ln 8", (ori - 8f64.ln()).abs()),
        ("ln 9", (pose - 9f64.ln()).abs()),
        ("ln 3", (seg - 3f64.ln()).abs()),
        ("deep supervision", (ds - (144f64.ln() + 576f64.ln() + 2304f64.ln())).abs()),
        ("soft orientation", (soft - ((e + 7.0).ln() - 0.9125)).abs()),
        ("unit bundle", (total_loss(&LossBundle::uniform(1.0))? - 103.0).abs()),
    ])
}

pub fn run(cfg: &Config, opts: VerifyOptions) -> CliResult<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut suites = Vec::new();

    let cases: Vec<ConvCase> = (0..opts.cases).map(|i| random_conv_case(&mut rng, i)).collect();
    let mut worst = (-1.0f64, String::new());
    for c in &cases {
        let d = packed_deviation(c, opts.perturb)?;
        if !(d <= worst.0) {
            worst = (d, c.describe());
        }
        let d = packed_comb_deviation(c, opts.perturb)?;
        if !(d <= worst.0) {
            worst = (d, format!("comb {}", c.for_comb().describe()));
        }
    }
    suites.push(
        SuiteResult::new("conv-packed", 2 * cases.len(), worst.0, PACKED_TOL).note(format!("worst {}", worst.1)),
    );

    let mut worst = (-1.0f64, String::new());
    let mut macs_ok = true;
    for c in &cases {
        let (d, ok) = comb_deviation(c)?;
        macs_ok &= ok;
        if !(d <= worst.0) {
            worst = (d, c.for_comb().describe());
        }
    }
    suites.push(
        SuiteResult::new("conv-comb", cases.len(), worst.0, COMB_TOL)
            .note(format!("worst {}", worst.1))
            .require(macs_ok, "multiply count differs from mac_count"),
    );

    let mut dev = 0.0f64;
    let mut detail = Vec::new();
    for d in 1..=4 {
        let (comb, stuffed, expect) = comb_mac_counts(d, opts.seed)?;
        let span = (d * 2 + 1) as u64;
        dev = dev.max(comb.abs_diff(expect) as f64);
        dev = dev.max((stuffed * 9).abs_diff(expect * span * span) as f64);
        detail.push(format!("d{d} {comb}/{stuffed}"));
    }
    suites.push(SuiteResult::new("comb-macs", 4, dev, 0.0).note(detail.join(" ")));

    let mut dev = 0.0f64;
    for i in 0..50 {
        dev = dev.max(bn_fold_deviation(&mut rng, i)?);
    }
    suites.push(SuiteResult::new("bn-fold", 50, dev, BN_TOL));

    let mut dev = 0.0f64;
    let (mut decisive, mut mismatches) = (0, 0);
    for k in 0..2u64 {
        let a = backend_agreement(cfg, opts.seed.wrapping_add(k), HeadSet::AllHeads, opts.perturb)?;
        dev = dev.max(a.max_dev);
        decisive += a.decisive_maps;
        mismatches += a.argmax_mismatches;
    }
    suites.push(
        SuiteResult::new("backend", 2, dev, BACKEND_TOL)
            .note(format!("{decisive} decisive heatmaps, {mismatches} argmax mismatches"))
            .require(mismatches == 0, "decoded keypoints differ"),
    );

    let grads = loss_gradient_errors(&mut rng, 10)?;
    let (name, err) = grads.iter().copied().fold(("", 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    suites.push(SuiteResult::new("loss-gradients", 10 * grads.len(), err, GRAD_TOL).note(format!("worst {name}")));

    let forms = loss_closed_form_errors()?;
    let err = forms.iter().map(|f| f.1).fold(0.0, f64::max);
    suites.push(SuiteResult::new("loss-closed-form", forms.len(), err, CLOSED_FORM_TOL));

    Ok(VerifyReport { seed: opts.seed, suites })
}

/// Fails with exit code 1 when any suite failed.
pub fn check(report: &VerifyReport) -> CliResult<()> {
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<String> = report
            .failures()
            .iter()
            .map(|s| format!("{} (max dev {:.3e})", s.name, s.max_dev))
            .collect();
        Err(CliError::Verification(names.join(", ")))
    }
}
