use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use orchestrion_bench::utilization_series;
use orchestrion_core::forecaster::{fit_and_forecast, Bounds, ForecastConfig};

fn forecast(c: &mut Criterion) {
    let config = ForecastConfig {
        horizon: 6,
        ..ForecastConfig::default()
    };
    let mut group = c.benchmark_group("arima_5_1_0");
    for len in [12, 48, 288] {
        let series = utilization_series(len);
        group.bench_with_input(BenchmarkId::from_parameter(len), &series, |b, s| {
            b.iter(|| fit_and_forecast(black_box(s), &config, Bounds::UTIL))
        });
    }
    group.finish();
}

criterion_group!(benches, forecast);
criterion_main!(benches);
