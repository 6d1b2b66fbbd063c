//! End-to-end acceptance checks. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any fails.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{distinct_tiles, mock_backend, random_image, random_permutation, rng, run, Xs};
use tessera::assignment::{best_flip_config, best_ring_rotation};
use tessera::engine::{
    Engine, EngineConfig, Mode, RunOptions, RunResult, TransformKind, DEFAULT_LATENT_ROLLOUT_STEPS,
    DEFAULT_MAINLINE_STEPS, DEFAULT_MIXING_RATIO, DEFAULT_PIXEL_LOOKAHEAD,
};
use tessera::schedule::fixed_ratio_weights;
use tessera::transform::{BlockOp, FlipLevel};
use tessera::{
    solve_rectangular, solve_square, CopySpec, CostMatrix, FlipConfig, ImageGrid, NoiseSchedule, RingRotation,
    ScheduleConfig, TransformSpec,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_matrix(r: &mut Xs, rows: usize, cols: usize, integral: bool) -> CostMatrix {
    let e = (0..rows * cols)
        .map(|_| if integral { r.below(10) as f64 } else { r.unit() * 100.0 })
        .collect();
    CostMatrix::new(rows, cols, e).unwrap()
}

/// Column-order sum, matching how an assignment's cost is reported.
fn column_cost(d: &CostMatrix, mapping: &[usize]) -> f64 {
    mapping.iter().enumerate().fold(0.0, |acc, (j, &r)| acc + d.get(r, j))
}

/// Heap's algorithm over every permutation of `0..n`.
fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut p: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    f(&p);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            p.swap(if i % 2 == 0 { 0 } else { c[i] }, i);
            f(&p);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

fn square_optimality() -> Outcome {
    let mut r = rng(1);
    let mut solve_time = Duration::ZERO;
    let start = Instant::now();
    for n in 2..=7 {
        for k in 0..1000 {
            let d = random_matrix(&mut r, n, n, k % 2 == 0);
            let t = Instant::now();
            let a = solve_square(&d).map_err(|e| e.to_string())?;
            solve_time += t.elapsed();
            let mut best = f64::INFINITY;
            for_each_permutation(n, |p| best = best.min(column_cost(&d, p)));
            if a.total_cost != best || column_cost(&d, &a.mapping) != best {
                return Err(format!("n={n} instance {k}: {} vs exhaustive {best}", a.total_cost));
            }
        }
    }
    let total = start.elapsed();
    check(
        solve_time < Duration::from_secs(10),
        format!("6000 instances exact; solver {solve_time:.2?}, with enumeration {total:.2?}"),
    )
}

fn exhaustive_with_copies(d: &CostMatrix, copies: &[usize]) -> f64 {
    fn go(d: &CostMatrix, j: usize, left: &mut [usize], acc: f64, best: &mut f64) {
        if j == d.cols() {
            *best = best.min(acc);
            return;
        }
        for r in 0..d.rows() {
            if left[r] > 0 {
                left[r] -= 1;
                go(d, j + 1, left, acc + d.get(r, j), best);
                left[r] += 1;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(d, 0, &mut copies.to_vec(), 0.0, &mut best);
    best
}

fn rectangular_optimality() -> Outcome {
    let mut r = rng(2);
    let mut done = 0;
    while done < 200 {
        let rows = 1 + r.below(4);
        let cols = 1 + r.below(4);
        let copies: Vec<usize> = (0..rows).map(|_| 1 + r.below(3)).collect();
        if copies.iter().sum::<usize>() < cols {
            continue;
        }
        let d = random_matrix(&mut r, rows, cols, done % 2 == 0);
        let a = solve_rectangular(&d, &CopySpec::new(copies.clone()).unwrap()).map_err(|e| e.to_string())?;
        let best = exhaustive_with_copies(&d, &copies);
        let within = (0..rows).all(|k| a.mapping.iter().filter(|&&m| m == k).count() <= copies[k]);
        if a.total_cost != best || column_cost(&d, &a.mapping) != best || !within {
            return Err(format!("{rows}x{cols} copies {copies:?}: {} vs exhaustive {best}", a.total_cost));
        }
        done += 1;
    }
    for n in 1..=7 {
        for k in 0..50 {
            let d = random_matrix(&mut r, n, n, k % 2 == 0);
            let rect = solve_rectangular(&d, &CopySpec::uniform(n, 1).unwrap()).unwrap();
            let square = solve_square(&d).unwrap();
            if rect.mapping != square.mapping || rect.total_cost.to_bits() != square.total_cost.to_bits() {
                return Err(format!("c=1 differs from square at n={n} instance {k}"));
            }
        }
    }
    Ok("200 instances exact; c=1 matches square bit-for-bit on 350 more".into())
}

fn fixed(prompts: usize, m: usize, seed: u64) -> EngineConfig {
    EngineConfig {
        mode: Mode::FixedPixel,
        prompts: (0..prompts).map(|i| format!("p{i}")).collect(),
        tiles: m,
        seed,
        ..Default::default()
    }
}

fn same_bits(a: &[f32], b: &[f32]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn conserves(beta: &ImageGrid, r: &RunResult) -> bool {
    let sorted = beta.sorted_values();
    r.images.iter().all(|img| same_bits(&img.sorted_values(), &sorted))
}

fn permutation_recovery() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for pull in [1.0, 0.5] {
        let mut hits = 0;
        for seed in 0..100u64 {
            let beta = distinct_tiles(4, 4, 1000 + seed);
            let truth = random_permutation(4, 4, 2000 + seed);
            let target = truth.apply(&beta).unwrap();
            let r = run(fixed(1, 4, seed), mock_backend(&[("p0", target)], pull), vec![beta], None, 0);
            if r.arrangements[0].transform() == Some(&TransformSpec::Permutation(truth)) {
                hits += 1;
            }
        }
        ok &= hits >= 95;
        lines.push(format!("pull {pull}: {hits}/100"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    check(ok, format!("{} in {elapsed:.2?}", lines.join(", ")))
}

fn pixel_conservation() -> Outcome {
    let mut runs = 0;
    for seed in 0..10u64 {
        let beta = distinct_tiles(4, 4, 3000 + seed);
        let cases = [
            (TransformKind::Permutation, random_permutation(4, 4, seed).apply(&beta).unwrap(), 1.0),
            (TransformKind::Permutation, random_image(16, 16, 3, seed), 0.5),
            (TransformKind::Flips, random_image(16, 16, 3, seed + 50), 0.5),
            (TransformKind::Flips, beta.clone(), 1.0),
        ];
        for (kind, target, pull) in cases {
            let mut cfg = fixed(2, 4, seed);
            cfg.transform = kind;
            cfg.flip_divisions = vec![1, 2, 4];
            let engine = Engine::new(
                cfg,
                mock_backend(&[("p0", target.clone()), ("p1", random_image(16, 16, 3, seed + 99))], pull),
                vec![beta.clone()],
                None,
                RunOptions {
                    workers: 2,
                    record_snapshots: true,
                },
            )
            .unwrap();
            let r = engine.run().unwrap();
            let sorted = beta.sorted_values();
            let every_step = r.snapshots.iter().all(|s| s.inputs.iter().all(|x| same_bits(&x.sorted_values(), &sorted)));
            if !conserves(&beta, &r) || !every_step {
                return Err(format!("{kind:?} seed {seed}: pixel multiset changed"));
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} fixed runs (2 prompts each), outputs and every mainline step exact"))
}

fn free(prompts: usize, kind: TransformKind, seed: u64) -> EngineConfig {
    EngineConfig {
        mode: Mode::FreePixel,
        prompts: (0..prompts).map(|i| format!("p{i}")).collect(),
        transform: kind,
        tiles: 4,
        flip_divisions: vec![1, 2, 4],
        seed,
        ..Default::default()
    }
}

fn transform_consistency() -> Outcome {
    let mut runs = 0;
    for kind in [TransformKind::Permutation, TransformKind::Flips] {
        for seed in 0..10u64 {
            let targets: Vec<_> = (0..3).map(|i| (format!("p{i}"), random_image(16, 16, 3, seed * 10 + i))).collect();
            let refs: Vec<_> = targets.iter().map(|(p, t)| (p.as_str(), t.clone())).collect();
            let r = run(free(3, kind, seed), mock_backend(&refs, 0.7), vec![], Some((16, 16, 3)), 0);
            let base = r.arrangements[0].transform().ok_or("free runs carry transforms")?;
            for i in 1..3 {
                let own = r.arrangements[i].transform().ok_or("free runs carry transforms")?;
                let rel = TransformSpec::relative(own, base).map_err(|e| e.to_string())?;
                let expected = rel.apply(&r.images[0]).map_err(|e| e.to_string())?;
                if !same_bits(expected.values(), r.images[i].values()) {
                    return Err(format!("{kind:?} seed {seed} prompt {i}: relative transform mismatch"));
                }
            }
            runs += 1;
        }
    }
    Ok(format!("{runs} three-prompt free runs bit-exact"))
}

/// Index of the first step after which every change count is zero.
fn settles(trace: &[usize]) -> Option<usize> {
    let k = trace.iter().rposition(|&c| c != 0).map_or(0, |k| k + 1);
    (k < trace.len()).then_some(k)
}

fn convergence() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for m in [4, 8] {
        let mut settled = 0;
        let mut latest = 0;
        for seed in 0..50u64 {
            let beta = distinct_tiles(m, 4, 4000 + seed);
            let target = random_permutation(m, 4, 5000 + seed).apply(&beta).unwrap();
            let r = run(fixed(1, m, seed), mock_backend(&[("p0", target)], 1.0), vec![beta], None, 0);
            // A step record starts at mainline position t; settling must
            // happen while t is still above zero.
            if let Some(k) = settles(&r.change_trace()).filter(|&k| r.steps[k].t > 0) {
                settled += 1;
                latest = latest.max(k);
            }
        }
        ok &= settled == 50;
        lines.push(format!("M={m}: {settled}/50 settled, latest at step {latest}"));
    }
    check(ok, lines.join(", "))
}

/// Direct per-ring scan: rotate every destination offset by `-θ`, read the
/// nearest pixel if it lies in the same ring, accumulate squared differences.
fn scan_rings(a: &ImageGrid, b: &ImageGrid, rings: usize, step: u32) -> (Vec<u32>, f64) {
    let (h, w, c) = a.shape();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let ring_of = |y: f64, x: f64| {
        let radius = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
        ((rings as f64 * radius / (h.min(w) as f64 / 2.0)).floor() as usize).min(rings - 1)
    };
    let mut best = vec![(0u32, f64::INFINITY); rings];
    for k in 0..360 / step {
        let angle = k * step;
        let (s, co) = match angle {
            0 => (0.0, 1.0),
            90 => (1.0, 0.0),
            180 => (0.0, -1.0),
            270 => (-1.0, 0.0),
            _ => (angle as f64).to_radians().sin_cos(),
        };
        let mut sums = vec![0.0f64; rings];
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f64 - cy, x as f64 - cx);
                // Half-way positions are ties; strip float noise and round
                // them away from zero.
                let near = |v: f64| ((v * 1e9).round() / 1e9).round();
                let (sy, sx) = (near(cy + dy * co - dx * s), near(cx + dx * co + dy * s));
                let here = ring_of(y as f64, x as f64);
                let inside = sy >= 0.0 && sx >= 0.0 && sy < h as f64 && sx < w as f64;
                let (py, px) = if inside && ring_of(sy, sx) == here { (sy as usize, sx as usize) } else { (y, x) };
                for ch in 0..c {
                    let d = a.get(py, px, ch) as f64 - b.get(y, x, ch) as f64;
                    sums[here] += d * d;
                }
            }
        }
        for ring in 0..rings {
            if sums[ring] < best[ring].1 {
                best[ring] = (angle, sums[ring]);
            }
        }
    }
    (best.iter().map(|p| p.0).collect(), best.iter().map(|p| p.1.sqrt()).sum())
}

/// Per level, tries all eight ops on each block in isolation and checks the
/// chosen op is a minimiser.
fn scan_flips(a: &ImageGrid, b: &ImageGrid, config: &FlipConfig) -> Result<(), String> {
    let mut current = a.clone();
    for level in config.levels() {
        let d = level.division;
        let side = a.height() / d;
        let block_distance = |img: &ImageGrid, blk: usize| {
            let (oy, ox) = ((blk / d) * side, (blk % d) * side);
            let mut acc = 0.0f64;
            for y in oy..oy + side {
                for x in ox..ox + side {
                    for ch in 0..a.channels() {
                        acc += (img.get(y, x, ch) as f64 - b.get(y, x, ch) as f64).powi(2);
                    }
                }
            }
            acc
        };
        for blk in 0..d * d {
            let only = |op: BlockOp| {
                let mut ops = vec![BlockOp::IDENTITY; d * d];
                ops[blk] = op;
                let single = FlipConfig::new(vec![FlipLevel { division: d, ops }]).unwrap();
                block_distance(&single.apply(&current).unwrap(), blk)
            };
            let chosen = only(level.ops[blk]);
            let best = BlockOp::all().into_iter().map(only).fold(f64::INFINITY, f64::min);
            if chosen > best {
                return Err(format!("division {d} block {blk}: {chosen} > {best}"));
            }
        }
        current = FlipConfig::new(vec![level.clone()]).unwrap().apply(&current).unwrap();
    }
    Ok(())
}

fn ring_and_flip_recovery() -> Outcome {
    let mut cases = 0;
    for seed in 0..24u64 {
        // Rings at least 8 px wide, so a 5° step moves some pixel of every ring
        // and 90° is the unique exact fit.
        let a = random_image(48, 48, 3, 6000 + seed);
        let mut r = rng(seed);
        // Lattice-exact rings.
        let truth: Vec<u32> = (0..3).map(|_| 90 * r.below(4) as u32).collect();
        let rot = RingRotation::new(5, truth.clone()).unwrap();
        let b = rot.apply(&a).unwrap();
        let fit = best_ring_rotation(&a, &b, &RingRotation::zero(3, 5).unwrap()).map_err(|e| e.to_string())?;
        if fit.transform.rotations() != truth.as_slice() || fit.energy != 0.0 {
            return Err(format!("seed {seed}: rings {:?} recovered as {:?}", truth, fit.transform.rotations()));
        }
        // Known flips at a single division are recovered exactly.
        let all = BlockOp::all();
        for d in [1, 2, 4] {
            let ops: Vec<BlockOp> = (0..d * d).map(|_| all[r.below(8)]).collect();
            let config = FlipConfig::new(vec![FlipLevel { division: d, ops }]).unwrap();
            let b = config.apply(&a).unwrap();
            let fit = best_flip_config(&a, &b, &[d]).map_err(|e| e.to_string())?;
            if fit.transform.simplified() != config.simplified() || fit.energy != 0.0 {
                return Err(format!("seed {seed}: flips at division {d} not recovered"));
            }
        }
        // Stacked divisions: every block's op is the best of its eight,
        // given the coarser levels already chosen.
        let b = random_image(48, 48, 3, 8000 + seed);
        let fit = best_flip_config(&a, &b, &[1, 4]).map_err(|e| e.to_string())?;
        scan_flips(&a, &b, &fit.transform).map_err(|e| format!("seed {seed}: {e}"))?;
        // Random pair: the fit must agree with a direct 72-candidate scan.
        let b = random_image(48, 48, 3, 7000 + seed);
        let fit = best_ring_rotation(&a, &b, &RingRotation::zero(3, 5).unwrap()).map_err(|e| e.to_string())?;
        let (angles, energy) = scan_rings(&a, &b, 3, 5);
        if fit.transform.rotations() != angles.as_slice() || (fit.energy - energy).abs() > 1e-9 * energy.max(1.0) {
            return Err(format!("seed {seed}: scan gives {angles:?}, fit {:?}", fit.transform.rotations()));
        }
        cases += 1;
    }
    Ok(format!("{cases} ring, {} flip and {} scan cases", cases * 3, cases * 2))
}

fn schedule_constants() -> Outcome {
    let mut problems = Vec::new();
    let mut rows = Vec::new();
    for steps in [DEFAULT_MAINLINE_STEPS, DEFAULT_LATENT_ROLLOUT_STEPS] {
        let s = NoiseSchedule::new(&ScheduleConfig::default(), steps).unwrap();
        let w = fixed_ratio_weights(0.02, &s).unwrap();
        let ratio = w.w_image / (w.w_image + w.w_noise);
        if (ratio - 0.02).abs() > 1e-12 {
            problems.push(format!("ratio {ratio} at {steps} steps"));
        }
        let worst = (0..steps)
            .map(|t| {
                let w = s.weights_at(t).unwrap();
                (w.w_image.powi(2) + w.w_noise.powi(2) - 1.0).abs()
            })
            .fold(0.0, f64::max);
        if worst > 1e-12 {
            problems.push(format!("w² sum off by {worst:e} at {steps} steps"));
        }
        rows.push(format!("{steps} steps: ratio err {:.1e}, w² err {worst:.1e}", (ratio - 0.02).abs()));
    }
    let d = EngineConfig::default();
    let defaults = (d.mainline_steps, d.rollout_steps_or_default(), DEFAULT_PIXEL_LOOKAHEAD, d.mixing_ratio);
    let latent = EngineConfig {
        mode: Mode::FreeLatent,
        ..Default::default()
    };
    if defaults != (15, 5, 5, 0.02) || latent.rollout_steps_or_default() != 50 || DEFAULT_MIXING_RATIO != 0.02 {
        problems.push(format!("defaults {defaults:?}"));
    }
    rows.push("T=15 l=5 S=50 ratio 0.02".into());
    check(problems.is_empty(), if problems.is_empty() { rows.join("; ") } else { problems.join("; ") })
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_cli(config: &Path, out: &Path, workers: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_tessera"))
        .arg("run")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg(workers.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!("{}: {}", config.display(), String::from_utf8_lossy(&o.stderr)));
    }
    let mut files: Vec<_> = fs::read_dir(out)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "timing.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut names: Vec<_> = fs::read_dir(configs())
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml" || e == "json"))
        .collect();
    names.sort();
    let mut compared = 0;
    for path in &names {
        let name = path.file_name().unwrap().to_string_lossy();
        let reference = run_cli(path, &tmp.path().join(format!("{name}.1a")), 1)?;
        for (tag, workers) in [("1b", 1), ("8", 8)] {
            let again = run_cli(path, &tmp.path().join(format!("{name}.{tag}")), workers)?;
            if again != reference {
                return Err(format!("{name}: output differs with {workers} workers"));
            }
        }
        compared += reference.len();
    }
    Ok(format!("{} configs, {compared} files identical across reruns and 1/8 workers", names.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("square assignment optimality", square_optimality),
        ("rectangular assignment with copies", rectangular_optimality),
        ("ground-truth permutation recovery", permutation_recovery),
        ("fixed-mode pixel conservation", pixel_conservation),
        ("free-mode transform consistency", transform_consistency),
        ("convergence trace settles", convergence),
        ("ring and flip recovery", ring_and_flip_recovery),
        ("schedule constants", schedule_constants),
        ("determinism across workers", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
