use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

use lsv_bench::fixture;
use lsv_core::compositor::{composite, composite_backward, composite_image, RenderConfig};
use lsv_core::mesh::deform_layers;
use lsv_core::render::{rasterize_layers, render};

fn bench_render(c: &mut Criterion) {
    let mut group = c.benchmark_group("render");
    group.sample_size(10);
    for size in [128usize, 512] {
        let f = fixture(12, size);
        let cfg = RenderConfig::default();
        group.throughput(Throughput::Elements((size * size) as u64));
        group.bench_with_input(BenchmarkId::new("12_layers", size), &f, |b, f| {
            b.iter(|| render(&f.stack, &f.tex, &f.camera, &f.pose, &f.shape, &cfg, false).unwrap())
        });
    }
    group.finish();
}

fn bench_stages(c: &mut Criterion) {
    let f = fixture(12, 512);
    let cfg = RenderConfig::default();
    let posed = deform_layers(&f.stack, &f.pose, &f.shape).unwrap();
    let gbuffers = rasterize_layers(&f.camera, &f.stack, &posed).unwrap();

    let mut group = c.benchmark_group("stages_512");
    group.sample_size(10);
    group.bench_function("deform", |b| b.iter(|| deform_layers(&f.stack, &f.pose, &f.shape).unwrap()));
    group.bench_function("raster", |b| b.iter(|| rasterize_layers(&f.camera, &f.stack, black_box(&posed)).unwrap()));
    group.bench_function("composite", |b| b.iter(|| composite_image(black_box(&gbuffers), &f.tex, &cfg).unwrap()));

    let buf = composite(&gbuffers, &f.tex, &cfg).unwrap();
    let d_rgb = vec![[1e-3; 3]; buf.num_pixels()];
    let mut grads = f.tex.zero_gradients();
    group.bench_function("composite_backward", |b| {
        b.iter(|| {
            grads.clear();
            composite_backward(&buf, &d_rgb, &f.tex, &mut grads, &cfg).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_render, bench_stages);
criterion_main!(benches);
