//! `combnet bench`: wall-clock timing of full forwards and layer classes.
//!
//! Timing uses `std::time::Instant` (monotonic). Warm-up runs are not
//! recorded. Kernels run on one thread except in rows marked `parallel`.

use std::fmt::Write as _;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use combnet_core::config::Config;
use combnet_core::conv::{
    comb_dilated_conv_counted, comb_dilated_conv_packed, conv2d_packed_counted, conv2d_ref_counted, mac_count,
    zero_stuff_kernel, ConvSpec, OpCounter,
};
use combnet_core::graph::{account, forward_reference_counted, init_weights, symbolic_shapes, Backend, ConvLayer, HeadSet, PreparedNet};
use combnet_core::tensor::{pack_kernels, to_interleaved, ConvWeights, Dims, Layout, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{graph_for, CliError, CliResult};

pub const DEFAULT_WARMUP: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub seed: u64,
    pub iters: usize,
    pub warmup: usize,
    /// Restricts the full-forward rows to one backend.
    pub backend: Option<Backend>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub case: String,
    pub backend: String,
    pub layer: String,
    pub iterations: usize,
    pub min_ms: f64,
    pub median_ms: f64,
    pub mean_ms: f64,
    /// From `mac_count` (summed over layers for full forwards).
    pub macs: u64,
}

impl BenchCase {
    pub fn macs_per_sec(&self) -> f64 {
        self.macs as f64 / (self.median_ms / 1e3)
    }

    /// Formatted numeric fields, shared by the table and the CSV.
    fn fields(&self) -> [String; 5] {
        [
            format!("{:.4}", self.min_ms),
            format!("{:.4}", self.median_ms),
            format!("{:.4}", self.mean_ms),
            self.macs.to_string(),
            format!("{:.4e}", self.macs_per_sec()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub timestamp: u64,
    pub config_hash: u64,
    pub threads: usize,
    pub cases: Vec<BenchCase>,
}

impl BenchReport {
    pub fn case(&self, case: &str, backend: &str) -> Option<&BenchCase> {
        self.cases.iter().find(|c| c.case == case && c.backend == backend)
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "timestamp {}  config {:016x}  threads {}",
            self.timestamp, self.config_hash, self.threads
        );
        let _ = writeln!(
            s,
            "{:<16} {:<18} {:<34} {:>5} {:>10} {:>10} {:>10} {:>10} {:>11}",
            "case", "backend", "layer", "iters", "min ms", "median ms", "mean ms", "MACs", "MACs/s"
        );
        for c in &self.cases {
            let [min, med, mean, macs, rate] = c.fields();
            let _ = writeln!(
                s,
                "{:<16} {:<18} {:<34} {:>5} {:>10} {:>10} {:>10} {:>10} {:>11}",
                c.case, c.backend, c.layer, c.iterations, min, med, mean, macs, rate
            );
        }
        for (name, a, b) in [
            ("forward", "reference", "optimized"),
            ("tier2-grouped", "reference", "packed"),
            ("tier3-dilated-d2", "zero-stuffed", "comb"),
            ("tier3-dilated-d4", "zero-stuffed", "comb"),
        ] {
            if let (Some(x), Some(y)) = (self.case(name, a), self.case(name, b)) {
                let _ = writeln!(s, "{name}: {b} is {:.2}x faster than {a} (median)", x.median_ms / y.median_ms);
            }
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# timestamp={} config_hash={:016x} threads={}", self.timestamp, self.config_hash, self.threads);
        let _ = writeln!(s, "case,backend,layer,iterations,min_ms,median_ms,mean_ms,macs,macs_per_sec");
        for c in &self.cases {
            let [min, med, mean, macs, rate] = c.fields();
            let _ = writeln!(
                s,
                "{},{},{},{},{min},{med},{mean},{macs},{rate}",
                c.case, c.backend, c.layer, c.iterations
            );
        }
        s
    }
}

/// Runs `f` `warmup + iters` times and returns the timed durations in ms.
fn time(warmup: usize, iters: usize, mut f: impl FnMut() -> CliResult<()>) -> CliResult<Vec<f64>> {
    for _ in 0..warmup {
        f()?;
    }
    (0..iters)
        .map(|_| {
            let t = Instant::now();
            f()?;
            Ok(t.elapsed().as_secs_f64() * 1e3)
        })
        .collect()
}

fn stats(mut ms: Vec<f64>) -> (f64, f64, f64) {
    ms.sort_by(f64::total_cmp);
    let n = ms.len();
    let median = if n % 2 == 1 { ms[n / 2] } else { 0.5 * (ms[n / 2 - 1] + ms[n / 2]) };
    (ms[0], median, ms.iter().sum::<f64>() / n as f64)
}

struct Runner {
    warmup: usize,
    iters: usize,
    cases: Vec<BenchCase>,
}

impl Runner {
    fn run(&mut self, case: &str, backend: &str, layer: &str, macs: u64, f: impl FnMut() -> CliResult<()>) -> CliResult<()> {
        let (min_ms, median_ms, mean_ms) = stats(time(self.warmup, self.iters, f)?);
        self.cases.push(BenchCase {
            case: case.into(),
            backend: backend.into(),
            layer: layer.into(),
            iterations: self.iters,
            min_ms,
            median_ms,
            mean_ms,
            macs,
        });
        Ok(())
    }
}

fn random_tensor(rng: &mut ChaCha8Rng, dims: Dims) -> Tensor {
    Tensor::from_vec(dims, Layout::ChannelPlanar, (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("sized to dims")
}

fn random_weights(rng: &mut ChaCha8Rng, s: &ConvSpec) -> ConvWeights {
    let data = (0..s.weight_len()).map(|_| rng.gen_range(-0.5..0.5)).collect();
    ConvWeights::new(s.out_ch, s.in_per_group(), s.kernel.0, s.kernel.1, data).expect("sized to spec")
}

fn describe(s: &ConvSpec, d: Dims) -> String {
    format!(
        "{}x{} {}->{} k{} g{} s{} d{}",
        d.h, d.w, s.in_ch, s.out_ch, s.kernel.0, s.groups, s.stride, s.dilation
    )
}

pub fn run(cfg: &Config, opts: BenchOptions) -> CliResult<BenchReport> {
    if opts.iters == 0 {
        return Err(CliError::Input("--iters must be at least 1".into()));
    }
    let g = graph_for(cfg)?;
    let ws = init_weights(&g, opts.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (h, w) = g.input_hw;
    let image = Tensor::from_fn(Dims::chw(1, h, w), Layout::ChannelPlanar, |_, _, _, _| rng.gen_range(0.0..1.0));
    let mut r = Runner {
        warmup: opts.warmup,
        iters: opts.iters,
        cases: Vec::new(),
    };

    let forward_macs = account(&g, HeadSet::InferenceHeads)?.macs();
    let layer = format!("inference heads {h}x{w}");
    if opts.backend != Some(Backend::Optimized) {
        r.run("forward", "reference", &layer, forward_macs, || {
            forward_reference_counted(&g, &ws, &image, HeadSet::InferenceHeads)?;
            Ok(())
        })?;
    }
    if opts.backend != Some(Backend::Reference) {
        let net = PreparedNet::new(&g, &ws, cfg.network.lane_width)?;
        r.run("forward", "optimized", &layer, forward_macs, || {
            net.forward(&image, HeadSet::InferenceHeads)?;
            Ok(())
        })?;
        let net = net.with_parallel(true);
        r.run("forward", "optimized-parallel", &layer, forward_macs, || {
            net.forward(&image, HeadSet::InferenceHeads)?;
            Ok(())
        })?;
    }

    // Tier-2 grouped 3x3 convolution at its real input size.
    let trace = symbolic_shapes(&g, HeadSet::InferenceHeads)?;
    let grouped: &ConvLayer = g
        .conv_layers()
        .into_iter()
        .find(|l| l.name.starts_with("tier2") && l.spec.groups > 1 && l.spec.kernel.0 == 3)
        .ok_or_else(|| CliError::Config("no grouped 3x3 convolution in tier 2".into()))?;
    let at = trace.iter().position(|(n, _)| n == &grouped.name).expect("traced");
    let in_dims = trace[at - 1].1;
    let spec = ConvSpec { has_bias: false, ..grouped.spec };
    let x = random_tensor(&mut rng, in_dims);
    let wt = random_weights(&mut rng, &spec);
    let macs = mac_count(&spec, in_dims.h, in_dims.w)?;
    let layer = describe(&spec, in_dims);
    r.run("tier2-grouped", "reference", &layer, macs, || {
        conv2d_ref_counted(&x, &wt, None, &spec, &mut OpCounter::default())?;
        Ok(())
    })?;
    let packed = pack_kernels(&wt, spec.groups, cfg.network.lane_width)?;
    let xi = to_interleaved(&x)?;
    r.run("tier2-grouped", "packed", &layer, macs, || {
        conv2d_packed_counted(&xi, &packed, None, &spec, &mut OpCounter::default(), false)?;
        Ok(())
    })?;

    // Tier-3 dilated 3x3 convolution: zero-stuffed kernel vs comb fields.
    let in_dims = Dims::chw(32, 12, 12);
    let x = random_tensor(&mut rng, in_dims);
    let xi = to_interleaved(&x)?;
    for d in [2usize, 4] {
        let spec = ConvSpec::new(32, 32, 3).groups(8).dilation(d).bias(false);
        let wt = random_weights(&mut rng, &spec);
        let stuffed = zero_stuff_kernel(&wt, d);
        let dense = ConvSpec {
            kernel: (stuffed.kh, stuffed.kw),
            dilation: 1,
            ..spec
        };
        let case = format!("tier3-dilated-d{d}");
        let layer = describe(&spec, in_dims);
        r.run(&case, "zero-stuffed", &layer, mac_count(&dense, 12, 12)?, || {
            conv2d_ref_counted(&x, &stuffed, None, &dense, &mut OpCounter::default())?;
            Ok(())
        })?;
        let macs = mac_count(&spec, 12, 12)?;
        r.run(&case, "comb", &layer, macs, || {
            comb_dilated_conv_counted(&x, &wt, None, &spec, &mut OpCounter::default())?;
            Ok(())
        })?;
        let packed = pack_kernels(&wt, spec.groups, cfg.network.lane_width)?;
        r.run(&case, "comb-packed", &layer, macs, || {
            comb_dilated_conv_packed(&xi, &packed, None, &spec, &mut OpCounter::default(), false)?;
            Ok(())
        })?;
    }

    Ok(BenchReport {
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config_hash: g.config.hash(),
        threads: rayon::current_num_threads(),
        cases: r.cases,
    })
}
