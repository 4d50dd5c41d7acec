//! Acceptance criteria. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any fails.

use std::alloc::{GlobalAlloc, Layout, System};
use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use gsbench::cli::run_with_timer;
use gsbench::engine::{
    iterations_overlap, scatter_code, thread_code, Engine, EngineError, FakeTimer, MonotonicTimer,
    Verdict, SCATTER_SENTINEL,
};
use gsbench::metrics::{harmonic_mean, pearson_r};
use gsbench::patterns::{parse_pattern, IndexPattern};
use gsbench::planner::{plan_arena, Backend, Kernel, RunConfig};
use gsbench::suites::{app_pattern, suite_apps, suite_ustride, SuiteParams, APP_PATTERNS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts allocations of at least `THRESHOLD` bytes while armed.
struct Counting;

static THRESHOLD: AtomicUsize = AtomicUsize::new(usize::MAX);
static LARGE_ALLOCS: AtomicUsize = AtomicUsize::new(0);

fn note(size: usize) {
    if size >= THRESHOLD.load(Ordering::Relaxed) {
        LARGE_ALLOCS.fetch_add(1, Ordering::Relaxed);
    }
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        note(layout.size());
        unsafe { System.alloc(layout) }
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        note(layout.size());
        unsafe { System.alloc_zeroed(layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        note(new_size);
        unsafe { System.realloc(ptr, layout, new_size) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn patterns_golden() -> Outcome {
    let ms1 = parse_pattern("MS1:8:4:20").map_err(|e| e.to_string())?;
    check(ms1.indices() == [0, 1, 2, 3, 23, 24, 25, 26], || {
        format!("MS1:8:4:20 gave {:?}", ms1.indices())
    })?;
    let lap = parse_pattern("LAPLACIAN:2:2:100").map_err(|e| e.to_string())?;
    check(lap.indices() == [0, 100, 198, 199, 200, 201, 202, 300, 400], || {
        format!("LAPLACIAN:2:2:100 gave {:?}", lap.indices())
    })?;

    let table = include_str!("data/appendix_patterns.txt");
    let rows: Vec<&str> = table.lines().collect();
    check(rows.len() == 34 && APP_PATTERNS.len() == 34, || {
        format!("{} transcribed rows, {} built-in", rows.len(), APP_PATTERNS.len())
    })?;
    for (row, app) in rows.iter().zip(APP_PATTERNS.iter()) {
        // load from the table's own index list, then re-render
        let list = row.split(" & ").nth(1).ok_or("malformed row")?;
        let loaded: IndexPattern = list
            .trim_matches(|c| c == '[' || c == ']')
            .parse()
            .map_err(|e: gsbench::patterns::PatternError| e.to_string())?;
        check(loaded.indices() == app.indices, || format!("{} indices differ", app.name))?;
        let rendered = app.render_row();
        check(rendered.trim_end() == *row, || format!("{rendered:?} != {row:?}"))?;
    }
    Ok("MS1, LAPLACIAN and 34 table rows byte-identical".into())
}

// ---------------------------------------------------------------- 2

fn random_config(rng: &mut ChaCha8Rng) -> RunConfig {
    let len = rng.random_range(1..=32usize);
    let max_index = rng.random_range(0..=96u64);
    let indices: Vec<u64> = (0..len).map(|_| rng.random_range(0..=max_index)).collect();
    let kernel = if rng.random_bool(0.5) { Kernel::Gather } else { Kernel::Scatter };
    let delta = rng.random_range(0..=64u64);
    let count = rng.random_range(1..=64u64);
    let backend = if rng.random_bool(0.3) {
        Backend::Serial
    } else {
        Backend::Parallel { threads: rng.random_range(1..=8) }
    };
    RunConfig::new(kernel, IndexPattern::custom(indices).unwrap(), delta, count)
        .with_backend(backend)
        .with_runs(1)
}

fn effective_threads(c: &RunConfig) -> u64 {
    match c.backend {
        Backend::Serial => 1,
        Backend::Parallel { threads } => (threads as u64).min(c.count),
    }
}

/// Brute-force write set: address -> iterations that store to it.
fn write_set(c: &RunConfig) -> BTreeMap<u64, Vec<u64>> {
    let mut out: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for i in 0..c.count {
        for &x in c.pattern.indices() {
            out.entry(i * c.delta + x).or_default().push(i);
        }
    }
    out
}

/// Serial interpretation of a scatter: final value per address given a
/// value function for (iteration, lane).
fn reference_scatter(c: &RunConfig, value: impl Fn(u64, usize) -> f64) -> BTreeMap<u64, f64> {
    let mut out = BTreeMap::new();
    for i in 0..c.count {
        for (j, &x) in c.pattern.indices().iter().enumerate() {
            out.insert(i * c.delta + x, value(i, j));
        }
    }
    out
}

fn compare_buffer(large: &[f64], reference: &BTreeMap<u64, f64>) -> Result<(), String> {
    for (k, &v) in large.iter().enumerate() {
        let want = reference.get(&(k as u64)).copied().unwrap_or(SCATTER_SENTINEL);
        check(v == want, || format!("element {k}: got {v}, want {want}"))?;
    }
    Ok(())
}

fn oracle_equivalence() -> Outcome {
    const CASES: usize = 1200;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut gathers, mut scatters, mut skipped) = (0, 0, 0);
    for case in 0..CASES {
        let c = random_config(&mut rng);
        let ctx = |e: String| format!("case {case} ({} {} d={} n={} {:?}): {e}", c.kernel, c.pattern, c.delta, c.count, c.backend);
        let mut engine = Engine::for_batch(std::slice::from_ref(&c), FakeTimer::constant(1e-3))
            .map_err(|e| ctx(e.to_string()))?;
        match c.kernel {
            Kernel::Gather => {
                let source: Vec<f64> = (0..engine.arena().large().len())
                    .map(|_| rng.random_range(-1e6..1e6))
                    .collect();
                engine.arena_mut().large_mut().copy_from_slice(&source);
                let trace = engine.trace_gather(&c).map_err(|e| ctx(e.to_string()))?;
                let want: Vec<f64> = (0..c.count)
                    .flat_map(|i| c.pattern.indices().iter().map(move |&x| (i, x)))
                    .map(|(i, x)| source[(i * c.delta + x) as usize])
                    .collect();
                check(trace == want, || ctx("gather trace differs".into()))?;
                check(engine.validate(&c).map_err(|e| ctx(e.to_string()))?.passed(), || {
                    ctx("gather validation failed".into())
                })?;
                gathers += 1;
            }
            Kernel::Scatter => {
                let writes = write_set(&c);
                let overlap = writes.values().any(|its| its.windows(2).any(|w| w[0] != w[1]));
                check(overlap == iterations_overlap(c.pattern.indices(), c.delta, c.count), || {
                    ctx(format!("overlap detector disagrees with write set (oracle says {overlap})"))
                })?;
                let threads = effective_threads(&c);
                if threads > 1 && overlap {
                    let refused = matches!(
                        engine.validate(&c),
                        Err(EngineError::NondeterministicOverlap { .. })
                    );
                    check(refused, || ctx("overlapping parallel scatter not refused".into()))?;
                    skipped += 1;
                    continue;
                }
                // untimed, encoded values
                engine.arena_mut().large_mut().fill(SCATTER_SENTINEL);
                engine.scatter_encoded(&c).map_err(|e| ctx(e.to_string()))?;
                let len = c.pattern.len();
                compare_buffer(engine.arena().large(), &reference_scatter(&c, |i, j| scatter_code(i, j, len)))
                    .map_err(ctx)?;
                // timed path: sources hold per-thread codes
                engine.arena_mut().large_mut().fill(SCATTER_SENTINEL);
                engine.run(&c).map_err(|e| ctx(e.to_string()))?;
                let owner = |i: u64| (i * threads / c.count) as usize;
                compare_buffer(engine.arena().large(), &reference_scatter(&c, |i, j| thread_code(owner(i), j)))
                    .map_err(ctx)?;
                check(engine.validate(&c).map_err(|e| ctx(e.to_string()))? == Verdict::Pass, || {
                    ctx("scatter validation failed".into())
                })?;
                scatters += 1;
            }
        }
    }
    Ok(format!(
        "{CASES} configs: {gathers} gathers, {scatters} scatters matched, {skipped} overlapping parallel scatters refused"
    ))
}

// ---------------------------------------------------------------- 3

fn within_one_ulp(a: f64, b: f64) -> bool {
    a == b || (a.to_bits() as i64 - b.to_bits() as i64).abs() <= 1
}

fn accounting() -> Outcome {
    let times = vec![0.3, 0.1, 0.7, 0.125, 0.2];
    let min = 0.1;
    let cases = [("UNIFORM:16:1", 16u64, 1000u64), ("UNIFORM:16:64", 16, 1000), ("0,5,9", 3, 777), ("LAPLACIAN:3:1:10", 7, 12345)];
    let mut moved = Vec::new();
    for (p, len, count) in cases {
        let c = RunConfig::new(Kernel::Gather, parse_pattern(p).unwrap(), 3, count)
            .with_runs(times.len() as u32)
            .with_backend(Backend::Serial);
        let mut engine = Engine::for_batch(std::slice::from_ref(&c), FakeTimer::sequence(times.clone()))
            .map_err(|e| e.to_string())?;
        let r = engine.run(&c).map_err(|e| e.to_string())?;
        let formula = (8 * len * count) as f64 / min / 1e6;
        check(r.min_time == min, || format!("{p}: min_time {}", r.min_time))?;
        check(r.run_times == times, || format!("{p}: run_times {:?}", r.run_times))?;
        check(r.moved_bytes == 8 * len * count, || format!("{p}: moved_bytes {}", r.moved_bytes))?;
        check(within_one_ulp(r.bandwidth_mb_s, formula), || {
            format!("{p}: bandwidth {} vs formula {formula}", r.bandwidth_mb_s)
        })?;
        moved.push(r.moved_bytes);
    }
    check(moved[0] == moved[1], || format!("stride-1 {} vs stride-64 {}", moved[0], moved[1]))?;
    Ok(format!("bandwidth within 1 ulp for {} configs; stride-1/stride-64 both move {} bytes", cases.len(), moved[0]))
}

// ---------------------------------------------------------------- 4

fn statistics() -> Outcome {
    let h = harmonic_mean(&[1.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    check((h - 12.0 / 7.0).abs() <= 1e-12, || format!("hmean {h}"))?;
    let r = pearson_r(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).map_err(|e| e.to_string())?;
    let want = 3.0 / 12f64.sqrt();
    check((r - want).abs() <= 1e-12, || format!("pearson {r} vs {want}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let n = rng.random_range(3..40);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let a = rng.random_range(0.01..50.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let b = rng.random_range(-1e3..1e3);
        let c = rng.random_range(0.01..50.0);
        let d = rng.random_range(-1e3..1e3);
        let base = pearson_r(&xs, &ys).map_err(|e| e.to_string())?;
        let tx: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        let ty: Vec<f64> = ys.iter().map(|y| c * y + d).collect();
        let moved = pearson_r(&tx, &ty).map_err(|e| e.to_string())?;
        let err = (moved - a.signum() * base).abs();
        worst = worst.max(err);
        check(err <= 1e-9, || format!("case {case}: r {base} -> {moved} under a={a}"))?;
    }
    Ok(format!("hmean {h}, r {r}, affine invariance 1000 cases (max err {worst:.1e})"))
}

// ---------------------------------------------------------------- 5

fn stride_sweep() -> Outcome {
    let threads = 4;
    let params = SuiteParams {
        target_bytes: 1 << 28,
        backend: Backend::Parallel { threads },
        ..SuiteParams::default()
    };
    let suite = suite_ustride(Kernel::Gather, 16, &params).map_err(|e| e.to_string())?;
    let mut engine = Engine::for_batch(&suite.configs, MonotonicTimer).map_err(|e| e.to_string())?;
    let results = engine.sweep(&suite.configs).map_err(|e| e.to_string())?;
    let bw = |name: &str| {
        results
            .iter()
            .find(|r| r.name == name)
            .map(|r| r.bandwidth_mb_s)
            .ok_or_else(|| format!("{name} missing"))
    };
    let (s1, s8) = (bw("STRIDE-1")?, bw("STRIDE-8")?);
    let ratio = s8 / s1;
    let detail = format!("{threads} threads, stride-1 {s1:.0} MB/s, stride-8 {s8:.0} MB/s, ratio {ratio:.3} (limit 0.6)");
    check(ratio <= 0.6, || detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------- 6

fn delta_zero_scatter() -> Outcome {
    let app = app_pattern("LULESH-S3").ok_or("LULESH-S3 missing")?;
    let count = 1 << 16;
    let serial = RunConfig::new(Kernel::Scatter, app.pattern(), app.delta, count)
        .with_name(app.name)
        .with_backend(Backend::Serial);
    let parallel = serial.clone().with_backend(Backend::Parallel { threads: 4 });
    check(app.delta == 0, || format!("delta {}", app.delta))?;

    let batch = [serial.clone(), parallel.clone()];
    let mut engine = Engine::for_batch(&batch, MonotonicTimer).map_err(|e| e.to_string())?;
    let timed = engine.sweep(&batch).map_err(|e| e.to_string())?;

    let verdict = engine.validate(&serial).map_err(|e| e.to_string())?;
    check(verdict == Verdict::Pass, || format!("serial validation: {verdict:?}"))?;
    engine.arena_mut().large_mut().fill(SCATTER_SENTINEL);
    engine.scatter_encoded(&serial).map_err(|e| e.to_string())?;
    let len = app.indices.len();
    let large = engine.arena().large();
    for (j, &x) in app.indices.iter().enumerate() {
        let want = scatter_code(count - 1, j, len);
        check(large[x as usize] == want, || format!("element {x}: {} != last write {want}", large[x as usize]))?;
    }

    match engine.validate(&parallel) {
        Err(e @ EngineError::NondeterministicOverlap { .. }) => {
            check(e.to_string().contains("nondeterministic overlap"), || e.to_string())?;
            Ok(format!(
                "timed serial {:.0} MB/s and 4-thread {:.0} MB/s; serial last-writer-wins verified; parallel validation refused",
                timed[0].bandwidth_mb_s, timed[1].bandwidth_mb_s
            ))
        }
        other => Err(format!("parallel validation not refused: {other:?}")),
    }
}

// ---------------------------------------------------------------- 7

fn report_bytes(args: &[&str], threads: &str) -> Result<Vec<u8>, String> {
    let mut argv: Vec<&str> = args.to_vec();
    argv.extend(["-t", threads]);
    let mut out = Vec::new();
    let mut err = Vec::new();
    let timer = FakeTimer::sequence(vec![0.013, 0.011, 0.017, 0.0123, 0.019, 0.0101]);
    let code = run_with_timer(argv, timer, &mut out, &mut err);
    check(code == 0, || format!("{args:?} -t {threads}: exit {code}: {}", String::from_utf8_lossy(&err)))?;
    Ok(out)
}

fn determinism() -> Outcome {
    let mut checked = 0;
    for format in ["text", "csv", "json"] {
        let args = ["--suite", "apps", "--target-bytes", "65536", "--max-arena-bytes", "8388608", "-r", "3", "--format", format];
        let first = report_bytes(&args, "1")?;
        check(!first.is_empty(), || format!("{format}: empty report"))?;
        for threads in ["1", "2", "8", "2", "8"] {
            let again = report_bytes(&args, threads)?;
            check(again == first, || format!("{format} report differs at -t {threads}"))?;
            checked += 1;
        }
    }
    Ok(format!("text/CSV/JSON apps reports byte-identical over {checked} reruns at 1, 2, 8 threads"))
}

// ---------------------------------------------------------------- 8

fn single_allocation() -> Outcome {
    let params = SuiteParams {
        target_bytes: 1 << 16,
        max_arena_bytes: 1 << 26,
        runs: 2,
        backend: Backend::Parallel { threads: 4 },
    };
    let batch: Vec<RunConfig> = suite_apps(None, &params)
        .configs
        .into_iter()
        .filter(|c| c.name.as_deref().is_some_and(|n| !n.starts_with("BASELINE")))
        .collect();
    check(batch.len() == 34, || format!("{} app configs", batch.len()))?;
    let plan = plan_arena(&batch).map_err(|e| e.to_string())?;
    let large_bytes = plan.large_elements as usize * 8;

    LARGE_ALLOCS.store(0, Ordering::SeqCst);
    THRESHOLD.store(large_bytes, Ordering::SeqCst);
    let result = (|| {
        let mut engine = Engine::for_batch(&batch, FakeTimer::constant(1e-3)).map_err(|e| e.to_string())?;
        engine.sweep(&batch).map_err(|e| e.to_string())?;
        for c in batch.iter().filter(|c| c.kernel == Kernel::Gather) {
            engine.validate(c).map_err(|e| e.to_string())?;
        }
        Ok::<_, String>(engine.arena().large().len())
    })();
    THRESHOLD.store(usize::MAX, Ordering::SeqCst);
    let arena_len = result?;
    let seen = LARGE_ALLOCS.load(Ordering::SeqCst);
    check(arena_len as u64 == plan.large_elements, || format!("arena {arena_len} elements"))?;
    check(seen == 1, || format!("{seen} allocations of >= {large_bytes} bytes"))?;
    Ok(format!("one {large_bytes}-byte allocation across 34 configs (sweep + validation)"))
}

// ----------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("pattern goldens", Some(Duration::from_secs(1)), patterns_golden),
        ("kernel oracle equivalence", Some(Duration::from_secs(30)), oracle_equivalence),
        ("accounting exactness", Some(Duration::from_secs(1)), accounting),
        ("statistics", Some(Duration::from_secs(5)), statistics),
        ("stride-8 vs stride-1 bandwidth", None, stride_sweep),
        ("delta-0 scatter", Some(Duration::from_secs(10)), delta_zero_scatter),
        ("report determinism", Some(Duration::from_secs(5)), determinism),
        ("arena single allocation", Some(Duration::from_secs(5)), single_allocation),
    ];
    let mut failed = 0;
    for (n, (name, budget, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut outcome = f();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, budget) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; took {elapsed:.2?}, budget {limit:?}"));
            }
        }
        match outcome {
            Ok(detail) => println!("[PASS] criterion {}: {name}: {detail} ({elapsed:.2?})", n + 1),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {}: {name}: {detail} ({elapsed:.2?})", n + 1);
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
