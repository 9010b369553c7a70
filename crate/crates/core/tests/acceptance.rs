//! Acceptance criteria, each run at its stated tolerance.
//!
//! Prints one PASS/FAIL line per criterion. Failures are reported but only
//! change the exit status when `ACCEPTANCE_STRICT=1`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use fsstn::metrics::{
    emd_to_ideal, normalized_energy_curve, optimize_sigma, parse_grid, EmdOptions,
};
use fsstn::operators::{estimate, relative_gamma, Estimator, OperatorOptions};
use fsstn::pipeline::{
    d_sweep, fused_squeeze, prepare_input, reconstruct, ridges_of, score_reconstruction,
    transform, Method, SigmaChoice, TransformConfig,
};
use fsstn::ridge::RidgeConfig;
use fsstn::signal::{
    add_noise, make_paper_signal, output_snr_slices, synthesize, ChirpRingdown,
    ModeSpec, BenchmarkSignal, SampledSignal,
};
use fsstn::squeeze::{squeeze, SqueezeConfig};
use fsstn::stft::{stft_point, StftConfig, StftStack};
use fsstn::symbolic::{ModulationChain, RationalExpr, Symbol};
use fsstn::window::{build_window_family, WindowKind};
use fsstn::Complex64;

const FS: f64 = 1024.0;
const N: usize = 1024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn benchmark() -> BenchmarkSignal {
    make_paper_signal(FS, N).expect("paper signal")
}

fn sigma_grid() -> Vec<f64> {
    parse_grid("0.01:0.01:0.2").unwrap()
}

fn ridge_cfg() -> RidgeConfig {
    RidgeConfig::for_band(2, 0)
}

fn fsst(sig: &SampledSignal, m: Method, sigma: f64) -> fsstn::pipeline::TransformOutput {
    transform(sig, &TransformConfig::new(m, SigmaChoice::Fixed(sigma))).expect("transform")
}

const ORDERED: [Method; 3] = [Method::Fsst2, Method::Fsst3, Method::Fsst4];

fn table_one() -> Outcome {
    let start = Instant::now();
    let p = benchmark();
    let sigma = optimize_sigma(&p.f, &sigma_grid(), 3.0, StftConfig::default())
        .unwrap()
        .sigma_opt;
    let target = [[17.8, 25.7, 28.8], [1.73, 3.62, 6.87], [3.57, 5.57, 8.82]];
    let mut got = [[0.0; 3]; 3];
    for (c, m) in ORDERED.into_iter().enumerate() {
        let out = fsst(&p.f, m, sigma);
        let rec = reconstruct(&out, &ridge_cfg(), 0, N, false).unwrap();
        let rep = score_reconstruction(&[&p.f1, &p.f2], &p.f, &rec.modes).unwrap();
        got[0][c] = rep.per_mode[0];
        got[1][c] = rep.per_mode[1];
        got[2][c] = rep.total;
    }
    let elapsed = start.elapsed().as_secs_f64();
    let mut pass = elapsed < 60.0;
    let mut rows = Vec::new();
    for (r, name) in ["f1", "f2", "f"].iter().enumerate() {
        let within = (0..3).all(|c| (got[r][c] - target[r][c]).abs() <= 3.0);
        let ordered = got[r][2] > got[r][1] && got[r][1] > got[r][0];
        pass &= within && ordered;
        rows.push(format!(
            "{name} {:.2}/{:.2}/{:.2} (target {}/{}/{}, within={within}, ordered={ordered})",
            got[r][0], got[r][1], got[r][2], target[r][0], target[r][1], target[r][2]
        ));
    }
    outcome(
        pass,
        format!("sigma={sigma}; {}; {elapsed:.1}s", rows.join("; ")),
    )
}

/// Mode with quartic log-amplitude and quartic phase.
fn quartic_mode() -> ModeSpec {
    ModeSpec::polynomial(&[0.0, 0.8, -1.5, 1.2, -0.5], &[0.0, 100.0, 300.0, -600.0, 400.0])
}

fn exactness() -> Outcome {
    let mode = quartic_mode();
    let sig = synthesize(&mode, N, FS, 0.0).unwrap();
    let sigma = 0.05;
    let fam = build_window_family(sigma, FS, 4, 4.0).unwrap();
    let stack = StftStack::compute(&sig, &fam, StftConfig::default()).unwrap();
    let g = stack.field(WindowKind::G).unwrap();
    let gamma = relative_gamma(g, 1e-3);
    let peak = g.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let h = fam.half_len();
    let axes = stack.axes();
    let errors = |est: Estimator| {
        let f = estimate(&stack, est, gamma, &OperatorOptions::default()).unwrap();
        let mut errs = Vec::new();
        for i in h..N - h {
            let truth = mode.inst_freq(axes.frame_time(i));
            for b in 0..stack.n_bins() {
                if g[[i, b]].norm() > 0.1 * peak {
                    let e = (f.omega_hat[[i, b]] - truth).abs() / axes.f_step;
                    errs.push(if e.is_finite() { e } else { f64::INFINITY });
                }
            }
        }
        errs
    };
    let e4 = errors(Estimator::OrderN(4));
    let frac = e4.iter().filter(|&&e| e <= 1.0).count() as f64 / e4.len() as f64;
    let e2max = errors(Estimator::SecondOrderEta)
        .into_iter()
        .fold(0.0, f64::max);
    outcome(
        frac >= 0.99 && e2max > 2.0,
        format!(
            "order 4: {:.3}% of {} bins within 1 bin; order 2 max error {e2max:.2} bins",
            100.0 * frac,
            e4.len()
        ),
    )
}

fn gaussian_chirp() -> Outcome {
    let (f0, rate, tc, a) = (250.0, 300.0, 0.5, 20.0);
    let mode = ModeSpec::new(
        move |t| (-a * (t - tc) * (t - tc)).exp(),
        move |t| f0 * t + 0.5 * rate * (t - tc) * (t - tc),
        move |t| f0 + rate * (t - tc),
    );
    let sig = synthesize(&mode, N, FS, 0.0).unwrap();
    let sigma = 0.05;
    let fam = build_window_family(sigma, FS, 4, 4.0).unwrap();
    let stack = StftStack::compute(&sig, &fam, StftConfig::default()).unwrap();
    let g = stack.field(WindowKind::G).unwrap();
    let gamma = relative_gamma(g, 1e-3);
    let h = fam.half_len();
    let q2 = estimate(&stack, Estimator::SecondOrderEta, gamma, &OperatorOptions::default()).unwrap();
    let mut worst_q2 = 0.0f64;
    for i in h..N - h {
        for b in 0..stack.n_bins() {
            if q2.valid[[i, b]] && q2.order_used[[i, b]] == 2 {
                worst_q2 = worst_q2.max((q2.modulation[0][[i, b]].re - rate).abs() / rate);
            }
        }
    }
    let f4 = estimate(&stack, Estimator::OrderN(4), gamma, &OperatorOptions::default()).unwrap();
    let axes = stack.axes();
    let mut worst_hi = 0.0f64;
    for i in h..N - h {
        let b = axes.nearest_bin(mode.inst_freq(axes.frame_time(i)), stack.n_bins()).unwrap();
        if f4.valid[[i, b]] {
            for k in 1..3 {
                worst_hi = worst_hi.max(f4.modulation[k][[i, b]].norm() / rate);
            }
        }
    }
    outcome(
        worst_q2 <= 1e-3 && worst_hi <= 1e-3,
        format!(
            "max |Re q2 - phi''|/phi'' = {worst_q2:.2e} on valid bins; max |q3|,|q4| / phi'' = {worst_hi:.2e} on ridge"
        ),
    )
}

fn conservation() -> Outcome {
    let p = benchmark();
    let signals = [
        ("tone", synthesize(&ModeSpec::tone(200.0, 1.0), N, FS, 0.0).unwrap()),
        ("paper", p.f.clone()),
        ("quartic", synthesize(&quartic_mode(), N, FS, 0.0).unwrap()),
    ];
    let mut worst = 0.0f64;
    for (_, sig) in &signals {
        for est in [
            Estimator::FirstOrder,
            Estimator::SecondOrderEta,
            Estimator::OrderN(3),
            Estimator::OrderN(4),
        ] {
            let sigma = 0.04;
            let fam = build_window_family(sigma, FS, est.order(), 4.0).unwrap();
            let stack = StftStack::compute(sig, &fam, StftConfig::default()).unwrap();
            let v = stack.matrix(WindowKind::G).unwrap();
            let gamma = relative_gamma(v.values.view(), 1e-3);
            let ife = estimate(&stack, est, gamma, &OperatorOptions::default()).unwrap();
            let sq = squeeze(&v, &ife, &SqueezeConfig::new(gamma)).unwrap();
            let scale = v.axes.f_step / fam.g0();
            let band = v.axes.f_step * v.n_bins() as f64;
            for i in 0..v.n_frames() {
                let mut kept = Complex64::new(0.0, 0.0);
                for b in 0..v.n_bins() {
                    let (z, w) = (v.values[[i, b]], ife.omega_hat[[i, b]]);
                    let in_band = w >= -0.5 * v.axes.f_step && w < band - 0.5 * v.axes.f_step;
                    if ife.valid[[i, b]] && z.norm() > gamma && in_band {
                        kept += z * scale;
                    }
                }
                let total: Complex64 = sq.matrix.values.row(i).sum();
                if kept.norm() > 0.0 {
                    worst = worst.max((total - kept).norm() / kept.norm());
                }
            }
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max per-frame relative deviation {worst:.2e} over 3 signals x 4 orders"),
    )
}

fn full_band_tone() -> Outcome {
    let sig = synthesize(&ModeSpec::tone(200.0, 1.0), N, FS, 0.0).unwrap();
    let sigma = 0.04;
    let h = (4.0 * sigma * FS).ceil() as usize;
    let mut worst = f64::INFINITY;
    for m in [Method::Fsst, Method::Fsst2, Method::Fsst3, Method::Fsst4] {
        let out = fsst(&sig, m, sigma);
        let rec = reconstruct(&out, &RidgeConfig::new(1), N / 2, N, false).unwrap();
        let snr = output_snr_slices(&sig.samples()[h..N - h], &rec.modes[0].samples()[h..N - h])
            .unwrap();
        worst = worst.min(snr);
    }
    outcome(worst >= 60.0, format!("min interior output SNR {worst:.1} dB over fsst..fsst4"))
}

fn orderings() -> Outcome {
    let p = benchmark();
    let sigma = optimize_sigma(&p.f, &sigma_grid(), 3.0, StftConfig::default())
        .unwrap()
        .sigma_opt;
    let curves: Vec<Vec<f64>> = ORDERED
        .iter()
        .map(|&m| normalized_energy_curve(fsst(&p.f2, m, sigma).magnitude().values.view(), N))
        .collect();
    let mut energy_ok = true;
    for c in 0..N {
        energy_ok &= curves[2][c] >= curves[1][c] - 1e-12 && curves[1][c] >= curves[0][c] - 1e-12;
    }
    let methods = [Method::Rm, Method::Fsst2, Method::Fsst3, Method::Fsst4];
    let opts = EmdOptions {
        mode: Some(1),
        floor: 0.0,
    };
    let mut lines = Vec::new();
    let mut emd_ok = true;
    for snr in [-5.0, 0.0, 5.0, 10.0] {
        let mut mean = [0.0; 4];
        for seed in 0..10u64 {
            let noisy = add_noise(&p.f, snr, seed).unwrap();
            for (k, &m) in methods.iter().enumerate() {
                let out = fsst(&noisy, m, sigma);
                let mag = out.magnitude();
                mean[k] += emd_to_ideal(mag.values.view(), &mag.axes, &p.ideal, &opts).unwrap() / 10.0;
            }
        }
        let ok = mean[3] < mean[2] && mean[2] < mean[1] && mean[1] < mean[0];
        emd_ok &= ok;
        lines.push(format!(
            "{snr} dB: rm {:.2} fsst2 {:.2} fsst3 {:.2} fsst4 {:.2}",
            mean[0], mean[1], mean[2], mean[3]
        ));
    }
    outcome(
        energy_ok && emd_ok,
        format!(
            "energy curves ordered={energy_ok}; at M: {:.4}/{:.4}/{:.4}; EMD Hz {}",
            curves[0][N - 1],
            curves[1][N - 1],
            curves[2][N - 1],
            lines.join(", ")
        ),
    )
}

fn sigma_stability() -> Outcome {
    let p = benchmark();
    let grid = sigma_grid();
    let opts: Vec<f64> = [f64::INFINITY, 5.0, 0.0, -5.0]
        .iter()
        .map(|&snr| {
            let s = add_noise(&p.f, snr, 1).unwrap();
            optimize_sigma(&s, &grid, 3.0, StftConfig::default()).unwrap().sigma_opt
        })
        .collect();
    let lo = opts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = opts.iter().cloned().fold(0.0, f64::max);
    outcome(
        hi - lo <= 0.01 + 1e-9,
        format!("sigma_opt at inf/5/0/-5 dB: {opts:?}"),
    )
}

fn d_shape() -> Outcome {
    let p = benchmark();
    let sigma = optimize_sigma(&p.f, &sigma_grid(), 3.0, StftConfig::default())
        .unwrap()
        .sigma_opt;
    let ds: Vec<usize> = (0..=10).collect();
    let mut curves = Vec::new();
    for m in ORDERED {
        let out = fsst(&p.f, m, sigma);
        let ridges = ridges_of(&out, &RidgeConfig::for_band(2, 10)).unwrap();
        let sweep = d_sweep(&out, &ridges, &ds, &[&p.f1, &p.f2], &p.f, false).unwrap();
        curves.push(sweep.iter().map(|(_, r)| r.total).collect::<Vec<_>>());
    }
    let monotone = curves.iter().all(|c| c.windows(2).all(|w| w[1] >= w[0]));
    let dominates = (0..ds.len()).all(|i| curves[2][i] >= curves[0][i]);
    let fmt = |c: &Vec<f64>| c.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>().join(",");
    outcome(
        monotone && dominates,
        format!(
            "nondecreasing={monotone}, fsst4>=fsst2={dominates}; fsst2 [{}] fsst3 [{}] fsst4 [{}]",
            fmt(&curves[0]),
            fmt(&curves[1]),
            fmt(&curves[2])
        ),
    )
}

fn derivative_oracle() -> Outcome {
    // outside every polynomial model class, so the only constant chain
    // entries are the structural unit diagonal
    let w = 6.0 * PI;
    let mode = ModeSpec::new(
        |t| (-8.0 * (t - 0.5) * (t - 0.5)).exp() * (1.0 + 0.3 * t),
        move |t| 200.0 * t + 75.0 * t * t + 0.4 * (w * t).sin(),
        move |t| 200.0 + 150.0 * t + 0.4 * w * (w * t).cos(),
    );
    let sig = synthesize(&mode, N, FS, 0.0).unwrap();
    let sigma = 0.05;
    let fam = build_window_family(sigma, FS, 4, 4.0)
        .unwrap()
        .with_kind(WindowKind::new(7, 0))
        .with_kind(WindowKind::new(4, 1));
    let c = Complex64::new(0.0, -2.0 * PI);
    let centers = [400usize, 512, 600];
    let h = 1e-3;
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut constant = 0;
    let rel = |a: Complex64, b: Complex64| (a - b).norm() / b.norm().max(1e-300);
    // weight-raising identities of the raw fields
    let raw: Vec<WindowKind> = (0..=6)
        .map(|l| WindowKind::new(l, 0))
        .chain((0..=3).map(|l| WindowKind::new(l, 1)))
        .collect();
    for &ctr in &centers {
        let eta = mode.inst_freq(ctr as f64 / FS) + 3.0;
        for &k in &raw {
            let p = stft_point(&sig, &fam, k, ctr, eta + h).unwrap();
            let m = stft_point(&sig, &fam, k, ctr, eta - h).unwrap();
            let fd = (p - m) / (2.0 * h);
            let raised = stft_point(&sig, &fam, WindowKind::new(k.power + 1, k.deriv), ctr, eta).unwrap();
            worst = worst.max(rel(c * raised, fd));
            checks += 1;
        }
    }
    // symbolic derivatives of every chain expression
    let chain = ModulationChain::build(4).unwrap();
    let available = WindowKind::required(4);
    let mut exprs: Vec<RationalExpr> = chain.y.clone();
    for row in &chain.x {
        exprs.extend(row.iter().flatten().cloned());
    }
    for (k, j) in [(2, 2), (3, 2), (3, 3), (4, 2), (4, 3), (4, 4)] {
        let v = |l: usize| RationalExpr::field(WindowKind::new(l, 0));
        exprs.push(v(0).mul(&v(k)).sub(&v(j - 1).mul(&v(k - j + 1))));
    }
    let exprs: Vec<RationalExpr> = exprs
        .into_iter()
        .filter(|e| e.eta_derivative(&available).is_ok())
        .collect();
    for &ctr in &centers {
        let eta = mode.inst_freq(ctr as f64 / FS) + 3.0;
        let fields_at = |e: f64| {
            let vals: Vec<(WindowKind, Complex64)> = fam
                .kinds()
                .map(|k| (k, stft_point(&sig, &fam, k, ctr, e).unwrap()))
                .collect();
            move |s: Symbol| match s {
                Symbol::Eta => Complex64::new(e, 0.0),
                Symbol::Field(k) => vals.iter().find(|(kk, _)| *kk == k).unwrap().1,
            }
        };
        let at = fields_at(eta);
        let (ap, am) = (fields_at(eta + h), fields_at(eta - h));
        for e in &exprs {
            let d = e.eta_derivative(&available).unwrap();
            let fd = (e.eval(&ap) - e.eval(&am)) / (2.0 * h);
            // identically constant entries have a zero derivative; measure
            // them against the natural derivative scale 2 pi sigma |e|
            let floor = 1e-6 * 2.0 * PI * sigma * e.eval(&at).norm();
            if fd.norm() < floor {
                constant += 1;
            }
            worst = worst.max((d.eval(&at) - fd).norm() / fd.norm().max(floor));
            checks += 1;
        }
    }
    outcome(
        worst <= 1e-3,
        format!(
            "{checks} finite-difference checks ({constant} of constant expressions), max relative deviation {worst:.2e}"
        ),
    )
}

fn gw_surrogate() -> Outcome {
    let model = ChirpRingdown::default();
    let fs = 4096.0;
    let n = 3441;
    let strain = model.strain(n, fs).unwrap();
    let prep = prepare_input(&strain, true).unwrap();
    let mut rms = Vec::new();
    for m in [Method::Fsst2, Method::Fsst4] {
        let fam = build_window_family(0.05, fs, m.squeeze_estimator().unwrap().order(), 4.0).unwrap();
        let v = fsstn::stft::stft(&prep.signal, &fam, WindowKind::G, StftConfig::default()).unwrap();
        let gamma = relative_gamma(v.values.view(), 1e-3);
        let (sq, _) = fused_squeeze(
            &prep.signal,
            &fam,
            m.squeeze_estimator().unwrap(),
            gamma,
            StftConfig::default(),
            &OperatorOptions::default(),
        )
        .unwrap();
        let ridges = fsstn::ridge::extract_ridges(sq.magnitude().view(), &RidgeConfig::new(1)).unwrap();
        let r = &ridges.ridges[0];
        let mut acc = 0.0;
        let mut cnt = 0;
        for i in 0..n {
            let t = i as f64 / fs;
            if model.amplitude(t) >= 0.1 {
                acc += (sq.axes.bin_freq(r[i]) - model.inst_freq(t)).powi(2);
                cnt += 1;
            }
        }
        rms.push((acc / cnt as f64).sqrt());
    }
    outcome(
        rms[1] <= rms[0],
        format!("ridge RMS error fsst2 {:.2} Hz, fsst4 {:.2} Hz (padded to {})", rms[0], rms[1], prep.signal.len()),
    )
}

fn first_mode_energy() -> Outcome {
    let p = benchmark();
    let mag = fsst(&p.f1, Method::Fsst4, 0.04).magnitude();
    let e = normalized_energy_curve(mag.values.view(), N)[N - 1];
    outcome(e >= 0.99, format!("fsst4 on f1 keeps {e:.4} of its energy in M coefficients"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("1 mode reconstruction table, d=0", table_one),
        ("2 fourth-order exactness ladder", exactness),
        ("3 Gaussian chirp modulation operators", gaussian_chirp),
        ("4 squeezing conservation identity", conservation),
        ("5 full-band tone reconstruction", full_band_tone),
        ("6 energy and EMD orderings on f2", orderings),
        ("7 sigma_opt stability under noise", sigma_stability),
        ("8 SNR versus d shape", d_shape),
        ("9 frequency-derivative oracle", derivative_oracle),
        ("GW surrogate ridge accuracy", gw_surrogate),
        ("supplementary: f1 energy concentration", first_mode_energy),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {name}: {} ({:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
