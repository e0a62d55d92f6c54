use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use conefield::flow::{find_fixed_point, NewtonConfig};
use conefield::koopman::{eigenpairs_fixed_point, AverageConfig};
use conefield::pf::pf_field;
use conefield::{Exec, Grid, SystemSpec};

fn sweep(c: &mut Criterion) {
    let spec = SystemSpec::builtin("fixedpoint-example").unwrap();
    let fp = find_fixed_point(&spec, &[0.0, 0.0], &NewtonConfig::default()).unwrap();
    let set = eigenpairs_fixed_point(&spec, &fp, &AverageConfig::default()).unwrap();
    let points = Grid::parse("-1:1:-1:1:7").unwrap().points();

    let mut group = c.benchmark_group("pf_field_7x7");
    group.sample_size(10);
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel { workers: 0 })] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, exec| {
            b.iter(|| {
                set.clear_cache();
                pf_field(&set, &points, *exec)
            })
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
