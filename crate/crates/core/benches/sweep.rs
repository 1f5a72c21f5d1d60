use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fjmem::exec::{self, Execution};
use fjmem::harness::{parse_config_str, run_policy, ScenarioConfig, SweepSpec};

const BASE: &str = r#"
seed = 1

[network]
seed = 3
[network.generator]
n_agents = 24

[model]
beta = 20.0
T = 6

[mpc]
horizon = 4
"#;

const SPEC: &str = "alpha = [0.2, 0.5, 0.8]\nbeta = [10.0, 20.0]\npolicy = [\"naive\", \"rh\"]\n";

fn run_cells(exec: Execution, base: &ScenarioConfig, spec: &SweepSpec) -> f64 {
    let cells = spec.cells(base).unwrap();
    exec::map(exec, &cells, |cell| {
        let run = run_policy(&cell.apply(base), cell.policy, None).unwrap();
        run.summary.x_bar_t
    })
    .iter()
    .sum()
}

fn sweep(c: &mut Criterion) {
    let base = parse_config_str(BASE).unwrap();
    let spec = SweepSpec::parse(SPEC).unwrap();
    let mut group = c.benchmark_group("sweep_cells");
    group.sample_size(10);
    for (name, exec) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel { jobs: None }),
    ] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| run_cells(exec, &base, &spec))
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
