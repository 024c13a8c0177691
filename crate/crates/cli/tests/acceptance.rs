//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use solenoid_core::bundles::{haar_family, shannon_family};
use solenoid_core::multiplicity::{detail_multiplicity, induced_multiplicity, Mult, MultFn};
use solenoid_core::pathspace::{
    cocycle_convergence, consistency_residual, cylinder_mass, disintegration_residual, measure_moment, PathMeasure,
    PointFn,
};
use solenoid_core::solenoid::{
    apply_u, apply_u_star, cocycle_to_harmonic, cond_expect, harmonic_basis, harmonic_to_cocycle, lift_to_martingale,
    omega_compat_residual, radon_nikodym_residual, shift_dilation_check, tower_residual, Dyadic, MartingaleFn,
    OmegaFamily,
};
use solenoid_core::transfer::{
    cell_midpoints, invariance_residual, prf_residual, solve_perron, strong_invariance_residual,
    strongly_invariant_measure, MeasureVector, StepFunction, Weight, DEFAULT_MAXIT,
};
use solenoid_core::wavelet::{
    cascade_product, embed_isometry_residual, qmf_residual, EmbedQuadrature, Filter, FreqGrid,
};
use solenoid_core::System;

type Check = anyhow::Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Check);

fn random_step(rng: &mut ChaCha8Rng, sys: &System, resolution: u32) -> StepFunction {
    StepFunction::from_letters(sys, resolution, |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
    .unwrap()
}

fn random_real_step(rng: &mut ChaCha8Rng, sys: &System, resolution: u32) -> StepFunction {
    StepFunction::from_letters(sys, resolution, |_| Complex64::new(rng.random_range(-1.0..1.0), 0.0)).unwrap()
}

fn families() -> anyhow::Result<Vec<(&'static str, OmegaFamily)>> {
    Ok(vec![("haar", haar_family(4)?), ("shannon", shannon_family()?)])
}

fn c1_perron_golden() -> Check {
    let sys = System::sft(vec![vec![1, 1], vec![1, 0]])?;
    let w = Weight::constant(&sys, 1, 1.0)?;
    let start = Instant::now();
    let p = solve_perron(&w, 1e-13, DEFAULT_MAXIT)?;
    let elapsed = start.elapsed();
    let closed = (1.0 + 5f64.sqrt()) / 2.0;
    let dense: f64 = Matrix2::new(1.0f64, 1.0, 1.0, 0.0).symmetric_eigenvalues().max();
    let err = (p.lambda0 - closed).abs().max((p.lambda0 - dense).abs());
    let pass = err <= 1e-10 && p.iterations <= 200 && elapsed < Duration::from_millis(100);
    Ok((pass, format!("lambda0={:.16} err={err:.1e} iterations={} time={elapsed:?}", p.lambda0, p.iterations)))
}

fn c2_ruelle_normalization() -> Check {
    let mut systems: Vec<(String, System)> =
        (2..=4).map(|n| (format!("circle{n}"), System::circle(n).unwrap())).collect();
    systems.push(("cantor".into(), System::cantor()));
    let mut worst = 0.0f64;
    for (_, sys) in &systems {
        for res in 1..=3u32 {
            let cells = sys.cells(res)?;
            let branches = sys.fiber_size(0) as f64;
            let p = solve_perron(&Weight::constant(sys, res, 1.0 / branches)?, 1e-14, DEFAULT_MAXIT)?;
            let h_dev = p.h.values().iter().map(|v| (v - 1.0).norm()).fold(0.0, f64::max);
            let mass = 1.0 / cells.len() as f64;
            let nu_dev = p.nu.masses().iter().map(|m| (m - mass).abs()).fold(0.0, f64::max);
            worst = worst.max((p.lambda0 - 1.0).abs()).max(h_dev).max(nu_dev);
        }
    }
    Ok((worst <= 1e-12, format!("max deviation over circle2-4 and cantor, depths 1-3: {worst:.1e}")))
}

fn c3_strong_invariance() -> Check {
    let mut worst = 0.0f64;
    for level in 1..=10 {
        worst = worst.max(strong_invariance_residual(&MeasureVector::uniform(&System::circle(2)?, level)?)?);
        worst = worst.max(strong_invariance_residual(&MeasureVector::uniform(&System::cantor(), level)?)?);
    }
    for level in 1..=6 {
        worst = worst.max(strong_invariance_residual(&MeasureVector::uniform(&System::circle(3)?, level)?)?);
    }
    let dirac = MeasureVector::dirac(&System::circle(2)?, 4, 0)?;
    let inv = invariance_residual(&dirac)?;
    let strong = strong_invariance_residual(&dirac)?;
    let pass = worst <= 1e-14 && inv <= 1e-14 && strong >= 0.1;
    Ok((pass, format!("lebesgue/bernoulli worst={worst:.1e}; dirac at 0: invariance={inv:.1e} strong={strong:.2}")))
}

fn c4_shannon() -> Check {
    let fam = shannon_family()?;
    let sys = fam.system().clone();
    let prf = prf_residual(fam.m0(), &StepFunction::ones(&sys, 1)?)?;

    let filter = Filter::shannon();
    let grid = FreqGrid::new(8.0, 8 * 256)?;
    let phi = cascade_product(&filter, 8, grid)?;
    let mismatches = grid
        .points()
        .zip(&phi.values)
        .filter(|(x, v)| {
            let chi = if (-0.5..0.5).contains(x) { 1.0 } else { 0.0 };
            **v != Complex64::new(chi, 0.0)
        })
        .count();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let quad = EmbedQuadrature { half_range: 1.0, nodes: 1 << 12, cascade_depth: 8, tol: 1e-8 };
    let mut embed = 0.0f64;
    for n in 0..=3 {
        let xi = random_step(&mut rng, &sys, 3);
        embed = embed.max(embed_isometry_residual(&filter, fam.h(), fam.mu(), &xi, n, quad)?);
    }
    let pass = prf <= 1e-15 && mismatches == 0 && embed <= 1e-8;
    Ok((pass, format!("prf={prf:.1e} cascade mismatches={mismatches}/{} embed={embed:.1e}", grid.samples)))
}

fn c5_haar() -> Check {
    let filter = Filter::haar();
    let qmf = (1..=8).map(|l| qmf_residual(&filter, l)).collect::<Result<Vec<_>, _>>()?;
    let qmf = qmf.into_iter().fold(0.0, f64::max);
    let grid = FreqGrid::new(8.0, 4000)?;
    let phi = cascade_product(&filter, 25, grid)?;
    let pi = std::f64::consts::PI;
    let sup = grid
        .points()
        .zip(&phi.values)
        .map(|(x, v)| {
            let sinc = if x == 0.0 { 1.0 } else { (pi * x).sin() / (pi * x) };
            (v - Complex64::from_polar(1.0, -pi * x) * sinc).norm()
        })
        .fold(0.0, f64::max);
    Ok((qmf <= 1e-12 && sup <= 1e-6, format!("qmf={qmf:.1e} cascade sup error={sup:.1e}")))
}

fn c6_solenoid() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut compat, mut rn, mut mart, mut tower) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut iso, mut idem) = (0.0f64, 0.0f64);
    for (name, fam) in families()? {
        let sys = fam.system().clone();
        for i in 0..20 {
            let n = i % 7;
            let f = random_step(&mut rng, &sys, 3);
            compat = compat.max(omega_compat_residual(&fam, &f, n)?);
            rn = rn.max(radon_nikodym_residual(&fam, &f, n)?);
            let m = lift_to_martingale(&fam, &f, n, n + 2)?;
            for j in 0..=m.depth() {
                for k in 0..=(m.depth() - j) {
                    mart = mart.max(cond_expect(&m, j, k)?.sup_distance(m.level(j)?)?);
                    tower = tower.max(tower_residual(&m, j, k)?);
                }
            }
            if name == "haar" {
                iso = iso.max((apply_u(&m)?.norm_sq()? - m.norm_sq()?).abs());
            } else {
                let p = apply_u(&apply_u_star(&m)?)?;
                let pp = apply_u(&apply_u_star(&p)?)?;
                idem = idem.max(pp.level_distance(&p)?);
            }
        }
    }
    let fam = shannon_family()?;
    let one = MartingaleFn::constant(&fam, Complex64::new(1.0, 0.0), 4)?;
    let ustar_u = apply_u_star(&apply_u(&one)?)?;
    let levelwise = ustar_u.level_distance(&one)?;
    let projection_defect = one.sub(&apply_u(&apply_u_star(&one)?)?)?.norm_sq()?;
    let pass = compat <= 1e-12
        && rn <= 1e-12
        && mart <= 1e-12
        && tower <= 1e-12
        && iso <= 1e-10
        && idem <= 1e-10
        && levelwise >= 0.5
        && projection_defect >= 0.1;
    Ok((
        pass,
        format!(
            "compat={compat:.1e} rn={rn:.1e} martingale={mart:.1e} tower={tower:.1e} U-isometry(haar)={iso:.1e} \
             UU* idempotency(shannon)={idem:.1e}; witness: |U*U1 - 1|_levels={levelwise:.2} |1 - UU*1|^2={projection_defect:.3}"
        ),
    ))
}

fn c7_pathspace() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut consistency, mut exact) = (0.0f64, 0.0f64);
    let mut mc = Vec::new();
    for (name, fam) in families()? {
        let sys = fam.system().clone();
        let base = PathMeasure::from_family(&fam, &sys.point_from_letters(&[]))?;
        for cell in 0..sys.cells(3)?.len() {
            let p = base.with_start(sys.representative_letters(3, cell)?)?;
            for len in 0..=8 {
                for w in p.words(len) {
                    consistency = consistency.max(consistency_residual(&p, &w)?);
                }
            }
        }
        for n in 0..=5 {
            let f = random_real_step(&mut rng, &sys, 3);
            exact = exact.max(disintegration_residual(&fam, &f, n, 1, 0)?.exact_residual);
        }
        let f = random_real_step(&mut rng, &sys, 3);
        let start = Instant::now();
        let report = disintegration_residual(&fam, &f, 4, 100_000, 99)?;
        mc.push((name, report, start.elapsed()));
    }
    let mc_ok = mc.iter().all(|(_, r, t)| r.within_stderr(4.0) && *t < Duration::from_secs(5));
    let mc_text: Vec<String> = mc
        .iter()
        .map(|(name, r, t)| {
            format!("{name}: |mean-target|={:.1e} ({:.4} se) in {t:?}", r.mc_residual, r.mc_residual / r.stderr)
        })
        .collect();
    let pass = consistency <= 1e-12 && exact <= 1e-12 && mc_ok;
    Ok((pass, format!("consistency={consistency:.1e} exact={exact:.1e}; MC {}", mc_text.join(", "))))
}

fn golden_oracle(m: [u64; 2], word0: u32) -> u64 {
    // Preimages of a word starting with s are 0s (always) and 1s (only when s = 0).
    m[0] + if word0 == 0 { m[1] } else { 0 }
}

fn c8_multiplicity() -> Check {
    let circle = System::circle(2)?;
    let mut circle_ok = true;
    for res in 1..=4 {
        let m = MultFn::constant(&circle, res, Mult::Finite(1))?;
        circle_ok &= detail_multiplicity(&m)?.values().iter().all(|&v| v == Mult::Finite(1));
    }
    let golden = System::sft(vec![vec![1, 1], vec![1, 0]])?;
    let mut checked = 0;
    let mut golden_ok = true;
    for m in [[1u64, 1], [2, 1], [3, 2], [4, 0]] {
        for res in 1..=5u32 {
            let cells = golden.cells(res)?;
            let values = (0..cells.len()).map(|i| Mult::Finite(m[cells.first_letter(i) as usize])).collect();
            let mf = MultFn::new(&golden, res, values)?;
            let induced = induced_multiplicity(&mf)?;
            for i in 0..cells.len() {
                let expect = golden_oracle(m, cells.first_letter(i));
                golden_ok &= induced.values()[i] == Mult::Finite(expect);
                checked += 1;
            }
            if let Ok(detail) = detail_multiplicity(&mf) {
                for i in 0..cells.len() {
                    let s = cells.first_letter(i);
                    golden_ok &= detail.values()[i] == Mult::Finite(golden_oracle(m, s) - m[s as usize]);
                }
            } else {
                golden_ok &= (0..cells.len())
                    .any(|i| golden_oracle(m, cells.first_letter(i)) < m[cells.first_letter(i) as usize]);
            }
        }
    }
    let m = MultFn::new(&golden, 1, vec![Mult::Finite(2), Mult::Finite(1)])?;
    golden_ok &= induced_multiplicity(&m)?.values() == [Mult::Finite(3), Mult::Finite(2)];
    golden_ok &= detail_multiplicity(&m)?.values() == [Mult::Finite(1), Mult::Finite(1)];
    Ok((
        circle_ok && golden_ok,
        format!("circle detail all 1: {circle_ok}; golden cells checked={checked} exact: {golden_ok}"),
    ))
}

fn c9_cocycles() -> Check {
    let mut round = 0.0f64;
    let haar = haar_family(4)?;
    let shannon = shannon_family()?;
    let one = StepFunction::ones(haar.system(), 1)?;
    round = round.max(cocycle_to_harmonic(&harmonic_to_cocycle(&haar, &one, 3, 1e-12)?)?.sup_distance(&one)?);
    let basis = harmonic_basis(shannon.m0(), 3, 1e-10)?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut h0 = StepFunction::zeros(shannon.system(), 3)?;
    for b in &basis {
        let c = rng.random_range(0.2..2.0);
        h0 = h0.add(&b.scale(Complex64::new(c, 0.0)))?;
        let bc = harmonic_to_cocycle(&shannon, b, 3, 1e-10)?;
        round = round.max(cocycle_to_harmonic(&bc)?.sup_distance(b)?);
    }
    round = round.max(cocycle_to_harmonic(&harmonic_to_cocycle(&shannon, &h0, 3, 1e-10)?)?.sup_distance(&h0)?);
    let stats = cocycle_convergence(&shannon, &h0, 200, 10_000, 17, 1e-6)?;
    let pass = round <= 1e-12 && stats.failure_fraction < 0.01;
    Ok((
        pass,
        format!(
            "round trip={round:.1e} harmonic dim(shannon)={} failure fraction={} over {} paths",
            basis.len(),
            stats.failure_fraction,
            stats.paths
        ),
    ))
}

fn c10_shift_dilation() -> Check {
    let mut worst = 0.0f64;
    for k in [Dyadic::new(1, 0), Dyadic::new(3, 1), Dyadic::new(-2, 0)] {
        worst = worst.max(shift_dilation_check(k, -16, 16)?);
    }
    Ok((worst <= 1e-15, format!("worst residual={worst:.1e}")))
}

/// Fixed point of `M_p = (1/2) sum_{d in {0, 2}} E[((X + d) / 3)^p]`.
fn cantor_moment_oracle(p: usize) -> f64 {
    let mut m = vec![1.0f64];
    for k in 1..=p {
        let (mut rest, mut binom) = (0.0, 1.0);
        for (j, mj) in m.iter().enumerate() {
            rest += binom * 2f64.powi((k - j) as i32) * mj;
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        let s = 3f64.powi(k as i32);
        m.push(rest / (2.0 * s - 2.0));
    }
    m[p]
}

fn c11_cantor_moments() -> Check {
    let sys = System::cantor();
    let depth = 12;
    let mu = strongly_invariant_measure(&sys, depth)?;
    let (t1, t2) = (measure_moment(&mu, 1)?, measure_moment(&mu, 2)?);

    // Same moments from the cylinder masses of the path measure with W = 1/2.
    let p = PathMeasure::at_letters(&sys, PointFn::Const(0.5), PointFn::Const(1.0), vec![0])?;
    let mids = cell_midpoints(&sys, depth)?;
    let (mut p1, mut p2) = (0.0, 0.0);
    for w in p.words(depth as usize) {
        let mass = cylinder_mass(&p, &w)?;
        let end = sys.point_letters(&p.endpoint(&w)?)?;
        let x = mids[sys.cell_of_letters(depth, &end[..depth as usize])?];
        p1 += mass * x;
        p2 += mass * x * x;
    }
    let (o1, o2) = (cantor_moment_oracle(1), cantor_moment_oracle(2));
    let e1 = (t1 - o1).abs().max((p1 - o1).abs());
    let e2 = (t2 - o2).abs().max((p2 - o2).abs());
    let pass = e1 <= 1e-12 && e2 <= 1e-10;
    Ok((pass, format!("oracle M1={o1} M2={o2}; transfer ({t1:.15}, {t2:.15}) pathspace ({p1:.15}, {p2:.15}); err1={e1:.1e} err2={e2:.1e}")))
}

fn bundle(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../bundles").join(name)
}

fn run_cli(args: &[&str], config: &Path, out: &Path, threads: Option<&str>) -> anyhow::Result<i32> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_solenoid-kit"));
    cmd.args(args).arg("--config").arg(config).arg("--out").arg(out);
    if let Some(t) = threads {
        cmd.env("SOLENOID_KIT_THREADS", t);
    }
    let output = cmd.output()?;
    Ok(output.status.code().unwrap_or(-1))
}

fn read_dir_bytes(dir: &Path) -> anyhow::Result<Vec<(String, Vec<u8>)>> {
    let mut files = std::fs::read_dir(dir)?
        .map(|e| {
            let e = e?;
            Ok((e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path())?))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    files.sort();
    Ok(files)
}

fn c12_cli() -> Check {
    let tmp = tempfile::tempdir()?;
    let haar = run_cli(&["check"], &bundle("haar.json"), &tmp.path().join("haar"), None)?;
    let shannon = run_cli(&["check"], &bundle("shannon.json"), &tmp.path().join("shannon"), None)?;

    let mut corrupted = Vec::new();
    for (name, h) in [("haar.json", vec![1.0, 2.0]), ("shannon.json", vec![1.0, 2.0, 2.0, 1.0])] {
        let mut cfg: serde_json::Value = serde_json::from_slice(&std::fs::read(bundle(name))?)?;
        let resolution = if h.len() == 2 { 1 } else { 2 };
        cfg["h"] = serde_json::json!({ "resolution": resolution, "values": h });
        let path = tmp.path().join(format!("corrupt_{name}"));
        std::fs::write(&path, serde_json::to_vec_pretty(&cfg)?)?;
        corrupted.push(run_cli(&["check"], &path, &tmp.path().join(format!("corrupt_out_{name}")), None)?);
    }

    let mut identical = true;
    for (sub, cfg) in [("pathsim", "haar.json"), ("pathsim", "shannon.json"), ("solenoid", "haar_solenoid.json")] {
        let a = tmp.path().join(format!("{sub}_{cfg}_a"));
        let b = tmp.path().join(format!("{sub}_{cfg}_b"));
        let ca = run_cli(&[sub, "--seed", "42"], &bundle(cfg), &a, Some("1"))?;
        let cb = run_cli(&[sub, "--seed", "42"], &bundle(cfg), &b, Some("4"))?;
        identical &= ca == 0 && cb == 0 && read_dir_bytes(&a)? == read_dir_bytes(&b)?;
    }
    let pass = haar == 0 && shannon == 0 && corrupted.iter().all(|&c| c == 2) && identical;
    Ok((
        pass,
        format!("check haar={haar} shannon={shannon}; corrupted h exits={corrupted:?}; same seed byte-identical: {identical}"),
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("perron eigendata, golden mean", c1_perron_golden),
        ("ruelle normalization", c2_ruelle_normalization),
        ("strong invariance exactness", c3_strong_invariance),
        ("shannon pipeline", c4_shannon),
        ("haar pipeline", c5_haar),
        ("solenoid identities", c6_solenoid),
        ("path space", c7_pathspace),
        ("multiplicity", c8_multiplicity),
        ("cocycle correspondence", c9_cocycles),
        ("shift-dilation commutation", c10_shift_dilation),
        ("cantor moments", c11_cantor_moments),
        ("cli reproducibility", c12_cli),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!("criterion {:>2} {} {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
