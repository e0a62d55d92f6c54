use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use conefield::cone::{ConeField, ConeMode, ConeSample};
use conefield::flow::{
    find_fixed_point, find_limit_cycle, prolonged_point, CycleConfig, IntegratorConfig, NewtonConfig,
};
use conefield::koopman::{eigenpairs_fixed_point, eigenpairs_limit_cycle, AverageConfig, EigenpairSet};
use conefield::linalg::Matrix;
use conefield::pf::{pf_limit_check, pf_vector};
use conefield::SystemSpec;

type Check = Result<String, String>;
type Criterion<'a> = (u32, &'static str, Box<dyn FnOnce() -> Check + 'a>);

fn conefield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conefield")).args(args).output().unwrap()
}

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn analyze(args: &[&str], dir: &Path) -> (i32, f64, Value) {
    let start = Instant::now();
    let mut all = vec!["analyze"];
    all.extend_from_slice(args);
    all.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    let out = conefield(&all);
    let secs = start.elapsed().as_secs_f64();
    let code = out.status.code().unwrap();
    if code == 3 {
        return (code, secs, Value::Null);
    }
    (code, secs, manifest(dir))
}

fn fixed_point_set(name: &str) -> EigenpairSet {
    let spec = SystemSpec::builtin(name).unwrap();
    let fp = find_fixed_point(&spec, &vec![0.0; spec.dim()], &NewtonConfig::default()).unwrap();
    eigenpairs_fixed_point(&spec, &fp, &AverageConfig::default()).unwrap()
}

fn vanderpol_set() -> EigenpairSet {
    let spec = SystemSpec::builtin("vanderpol").unwrap();
    let lc = find_limit_cycle(&spec, &[2.0, 0.0], &CycleConfig::default()).unwrap();
    eigenpairs_limit_cycle(&spec, &lc, &AverageConfig::default()).unwrap()
}

fn fixedpoint_field(x: &[f64]) -> [f64; 2] {
    let s = |v: f64| v.sin();
    [-s(x[0]) - 2.0 * s(x[1] / 2.0).powi(2), 2.0 * s(x[0] / 2.0).powi(2) - 1.5 * s(x[1])]
}

fn rk4(y: &mut [f64; 2], h: f64) {
    let g = |y: [f64; 2]| [y[1], (1.0 - y[0] * y[0]) * y[1] - y[0]];
    let at = |a: [f64; 2], k: [f64; 2], c: f64| [a[0] + c * k[0], a[1] + c * k[1]];
    let k1 = g(*y);
    let k2 = g(at(*y, k1, 0.5 * h));
    let k3 = g(at(*y, k2, 0.5 * h));
    let k4 = g(at(*y, k3, h));
    for i in 0..2 {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn verdict_clean(m: &Value) -> Result<(), String> {
    let p = &m["positivity"];
    ensure(
        p["verdict"] == "strictly positive" && p["counterexamples"].as_u64() == Some(0),
        format!("verdict {} with counterexamples {}", p["verdict"], p["counterexamples"]),
    )
}

fn criterion_1(fp_dir: &Path) -> Check {
    let spec = SystemSpec::builtin("fixedpoint-example").unwrap();
    let j = spec.eval_jacobian(&[0.0, 0.0]).map_err(|e| e.to_string())?;
    let (a, b, c, d) = (j.row(0)[0], j.row(0)[1], j.row(1)[0], j.row(1)[1]);
    let (tr, det) = (a + d, a * d - b * c);
    let root = Complex64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let ev = [tr / 2.0 + root, tr / 2.0 - root];
    ensure(
        (ev[0] - Complex64::new(-1.0, 0.0)).norm() <= 1e-12 && (ev[1] - Complex64::new(-1.5, 0.0)).norm() <= 1e-12,
        format!("eigenvalues {ev:?}"),
    )?;
    let (code, secs, m) = analyze(&["--builtin", "fixedpoint-example", "--grid=-2:2:-2:2:15", "--slack", "1e-6"], fp_dir);
    ensure(code == 0, format!("exit {code}"))?;
    ensure(secs < 120.0, format!("took {secs:.1} s"))?;
    verdict_clean(&m)?;
    Ok(format!("eigenvalues -1, -1.5; analyze {secs:.1} s, strictly positive"))
}

fn criterion_2(fp_dir: &Path) -> Check {
    let rows = read_csv(&fp_dir.join("eigenpairs.csv"));
    let mut detail = Vec::new();
    for (pair, lambda) in [("1", -1.0f64), ("2", -1.5)] {
        let mine: Vec<_> = rows.iter().filter(|r| r["pair"] == pair).collect();
        ensure(!mine.is_empty(), format!("no rows for pair {pair}"))?;
        let good = mine
            .iter()
            .filter(|r| {
                let x = [num(r, "x1"), num(r, "x2")];
                let f = fixedpoint_field(&x);
                let phi = Complex64::new(num(r, "re_phi"), num(r, "im_phi"));
                let d = [
                    Complex64::new(num(r, "re_dphi_1"), num(r, "im_dphi_1")),
                    Complex64::new(num(r, "re_dphi_2"), num(r, "im_dphi_2")),
                ];
                let lie = d[0] * f[0] + d[1] * f[1];
                let grad = (d[0].norm_sqr() + d[1].norm_sqr()).sqrt();
                let scale = lambda.abs() * phi.norm() + 1e-12 * grad * (lambda.abs() + f[0].hypot(f[1])) + f64::MIN_POSITIVE;
                (lie - lambda * phi).norm() / scale < 1e-3
            })
            .count();
        let frac = good as f64 / mine.len() as f64;
        ensure(frac >= 0.95, format!("pair {pair}: {good}/{}", mine.len()))?;
        detail.push(format!("pair {pair} {:.1}%", 100.0 * frac));
    }
    Ok(detail.join(", "))
}

fn evolution_failures(set: &EigenpairSet, points: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<String> {
    let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-11);
    let id = Matrix::identity(2);
    let mut bad = Vec::new();
    for x in points {
        let vx = set.evaluate(x).unwrap();
        let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let dx = [a.cos(), a.sin()];
        for t in [0.5, 1.0, 2.0] {
            let (y, m) = prolonged_point(set.spec(), x, &id, t, &cfg).unwrap();
            let vy = set.evaluate(&y).unwrap();
            let pushed = m.mul_vec(&dx);
            for (j, pair) in set.pairs().iter().enumerate() {
                let growth = (pair.lambda * t).exp();
                let e1 = (vy[j].phi - growth * vx[j].phi).norm() / (1.0 + vx[j].phi.norm());
                let row = vx[j].apply(&dx);
                let e2 = (vy[j].apply(&pushed) - growth * row).norm() / (1.0 + row.norm());
                if e1 > 1e-3 || e2 > 1e-3 {
                    bad.push(format!("{x:?} t={t} pair {j}: {e1:e}, {e2:e}"));
                }
            }
        }
    }
    bad
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let square: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
    let annulus: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let r: f64 = rng.gen_range(0.6..2.5);
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            vec![r * a.cos(), r * a.sin()]
        })
        .collect();
    let mut bad = evolution_failures(&fixed_point_set("fixedpoint-example"), &square, &mut rng);
    bad.extend(evolution_failures(&vanderpol_set(), &annulus, &mut rng));
    ensure(bad.is_empty(), bad.join("; "))?;
    Ok("20 points per system, t = 0.5, 1, 2".into())
}

struct Coordinate;

impl ConeField for Coordinate {
    fn dim(&self) -> usize {
        2
    }
    fn cone_at(&self, x: &[f64]) -> conefield::Result<ConeSample> {
        Ok(ConeSample::new(
            x.to_vec(),
            ConeMode::Tabulated,
            vec![1.0, 0.0],
            vec![vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]],
        ))
    }
    fn describe(&self) -> String {
        "coordinate cone".into()
    }
}

fn criterion_4() -> Check {
    let set = fixed_point_set("linear-diag(-1,-2)");
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-11);
    let mut worst = [0.0f64; 3];
    for _ in 0..20 {
        let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let v = set.evaluate(&x).map_err(|e| e.to_string())?;
        worst[0] = worst[0].max((v[0].phi - x[0]).norm()).max((v[1].phi - x[1]).norm());

        let cone = Coordinate.cone_at(&x).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let (_, m) = prolonged_point(set.spec(), &x, &Matrix::identity(2), t, &cfg).unwrap();
            for k in 0..9 {
                let a = -std::f64::consts::FRAC_PI_4 + std::f64::consts::FRAC_PI_2 * k as f64 / 8.0;
                let (u, w) = ((-t).exp() * a.cos(), (-2.0 * t).exp() * a.sin());
                let want = (u - w.abs()) / u.hypot(w);
                let got = cone.margin(&m.mul_vec(&[a.cos(), a.sin()]));
                worst[1] = worst[1].max((got - want).abs());
            }
        }

        let w = pf_vector(&set, &x).map_err(|e| e.to_string())?.w;
        worst[2] = worst[2].max((w[0] - 1.0).abs()).max(w[1].abs());
    }
    ensure(worst[0] <= 1e-6, format!("eigenfunctions off coordinates by {:e}", worst[0]))?;
    ensure(worst[1] <= 1e-6, format!("margins off closed form by {:e}", worst[1]))?;
    ensure(worst[2] <= 1e-8, format!("PF vector off (1,0) by {:e}", worst[2]))?;
    Ok(format!("coordinates {:.1e}, margins {:.1e}, PF vector {:.1e}", worst[0], worst[1], worst[2]))
}

fn criterion_5(vdp_dir: &Path) -> Check {
    let spec = SystemSpec::builtin("vanderpol").unwrap();
    let lc = find_limit_cycle(&spec, &[2.0, 0.0], &CycleConfig::default()).map_err(|e| e.to_string())?;
    let dt = 1e-6;
    let mut y = [lc.anchor[0], lc.anchor[1]];
    let (mut t, mut div) = (0.0, 0.0);
    let mut crossings = Vec::new();
    let mut div_at = Vec::new();
    while crossings.len() < 3 {
        let prev = y;
        let g0 = 1.0 - prev[0] * prev[0];
        rk4(&mut y, dt);
        let g1 = 1.0 - y[0] * y[0];
        div += 0.5 * dt * (g0 + g1);
        t += dt;
        if prev[1] > 0.0 && y[1] <= 0.0 && y[0] > 0.0 {
            let s = prev[1] / (prev[1] - y[1]);
            crossings.push(t - dt + s * dt);
            div_at.push(div - (1.0 - s) * dt * 0.5 * (g0 + g1));
        }
    }
    let period = crossings[2] - crossings[1];
    ensure((lc.period - period).abs() <= 1e-6, format!("period {} vs oracle {period}", lc.period))?;
    let exponent = (div_at[2] - div_at[1]) / period;
    let floquet = lc.floquet_exponents[0];
    ensure(
        floquet.im.abs() < 1e-9 && (floquet.re - exponent).abs() <= 1e-4,
        format!("Floquet exponent {floquet} vs oracle {exponent}"),
    )?;

    let (code, secs, m) =
        analyze(&["--builtin", "vanderpol", "--grid=-3:3:-3:3:15", "--exclude-disk", "0.3"], vdp_dir);
    ensure(code == 0, format!("exit {code}"))?;
    ensure(secs < 600.0, format!("took {secs:.1} s"))?;
    verdict_clean(&m)?;
    Ok(format!(
        "period {:.9}, exponent {:.6}; analyze {secs:.1} s, strictly positive ({} skipped)",
        lc.period, floquet.re, m["positivity"]["skipped_points"]
    ))
}

fn criterion_6(fp_dir: &Path, vdp_dir: &Path) -> Check {
    let mut worst = 0.0f64;
    for dir in [fp_dir, vdp_dir] {
        let rows = read_csv(&dir.join("pf_field.csv"));
        ensure(!rows.is_empty(), format!("empty PF field in {}", dir.display()))?;
        for r in &rows {
            worst = worst.max(num(r, "res_2"));
        }
    }
    ensure(worst <= 1e-4, format!("annihilation residual {worst:e}"))?;

    let set = fixed_point_set("fixedpoint-example");
    let cfg = IntegratorConfig::default().with_tolerances(1e-12, 1e-11);
    let x = [0.3, 0.2];
    let a = pf_limit_check(set.spec(), &set, &x, 4.0, None, &cfg).map_err(|e| e.to_string())?.angle;
    let b = pf_limit_check(set.spec(), &set, &x, 8.0, None, &cfg).map_err(|e| e.to_string())?.angle;
    ensure(b <= 0.3 * a, format!("angle {a:e} at t=4, {b:e} at t=8"))?;
    Ok(format!("worst residual {worst:.1e}; angle ratio {:.3}", b / a))
}

fn criterion_7(fp_dir: &Path, scratch: &Path) -> Check {
    let out = conefield(&[
        "analyze",
        "--builtin",
        "vanderpol",
        "--mode",
        "fixed-point",
        "--out",
        scratch.join("refusal").to_str().unwrap(),
    ]);
    let err = String::from_utf8_lossy(&out.stderr);
    ensure(
        out.status.code() == Some(3) && err.contains("is complex"),
        format!("refusal exit {:?}: {err}", out.status.code()),
    )?;

    let text = std::fs::read_to_string(fp_dir.join("cone_grid.csv")).unwrap();
    let mut corrupted = String::new();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        corrupted.push_str(&[f[0], f[1], f[4], f[5], f[2], f[3], f[6], f[7]].join(","));
        corrupted.push('\n');
    }
    let path = scratch.join("corrupted.csv");
    std::fs::write(&path, corrupted).unwrap();
    let out = conefield(&[
        "verify",
        "--builtin",
        "fixedpoint-example",
        "--grid=-2:2:-2:2:15",
        "--cone-file",
        path.to_str().unwrap(),
        "--out",
        scratch.join("corrupted").to_str().unwrap(),
    ]);
    ensure(out.status.code() == Some(2), format!("corrupted cone exit {:?}", out.status.code()))?;
    let m = manifest(&scratch.join("corrupted"));
    let count = m["positivity"]["counterexamples"].as_u64().unwrap_or(0);
    ensure(count > 0, "corrupted cone exit 2 without counterexamples".into())?;
    Ok(format!("refusal exit 3; corrupted cone exit 2 with {count} counterexamples"))
}

fn criterion_8(scratch: &Path) -> Check {
    let dirs = [scratch.join("run_a"), scratch.join("run_b")];
    for d in &dirs {
        let (code, _, _) = analyze(&["--builtin", "fixedpoint-example", "--grid=-2:2:-2:2:9", "--seed", "17"], d);
        ensure(code == 0, format!("analyze exit {code}"))?;
        let out = conefield(&[
            "export-grid",
            "--builtin",
            "vanderpol",
            "--grid=-2:2:-2:2:7",
            "--exclude-disk",
            "0.3",
            "--seed",
            "17",
            "--out",
            d.join("export").to_str().unwrap(),
        ]);
        ensure(out.status.code() == Some(0), format!("export-grid exit {:?}", out.status.code()))?;
    }
    let mut names: Vec<String> = std::fs::read_dir(&dirs[0])
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.extend(
        std::fs::read_dir(dirs[0].join("export"))
            .unwrap()
            .map(|e| format!("export/{}", e.unwrap().file_name().to_string_lossy()))
            .filter(|n| n.ends_with(".csv")),
    );
    names.sort();
    for n in &names {
        let a = std::fs::read(dirs[0].join(n)).unwrap();
        let b = std::fs::read(dirs[1].join(n)).unwrap();
        ensure(a == b, format!("{n} differs"))?;
    }
    Ok(format!("{} CSV files identical", names.len()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let fp_dir = tmp.path().join("fixedpoint");
    let vdp_dir = tmp.path().join("vanderpol");
    let checks: Vec<Criterion> = vec![
        (1, "fixed-point pipeline", Box::new(|| criterion_1(&fp_dir))),
        (2, "generator residual", Box::new(|| criterion_2(&fp_dir))),
        (3, "eigenfunction evolution", Box::new(criterion_3)),
        (4, "linear oracle suite", Box::new(criterion_4)),
        (5, "Van der Pol pipeline", Box::new(|| criterion_5(&vdp_dir))),
        (6, "PF consistency", Box::new(|| criterion_6(&fp_dir, &vdp_dir))),
        (7, "negative controls", Box::new(|| criterion_7(&fp_dir, tmp.path()))),
        (8, "determinism", Box::new(|| criterion_8(tmp.path()))),
    ];
    let mut failed = 0;
    for (n, name, check) in checks {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {n} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n} {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
