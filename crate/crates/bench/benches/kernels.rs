use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mscodec_core::tensor::{
    conv1d, local_windowed_attention, transposed_conv1d, AttentionParams, ConvSpec,
};
use mscodec_core::FrameTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn filled(r: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| r.random_range(-1.0f32..1.0)).collect()
}

fn tensor(r: &mut ChaCha8Rng, frames: usize, channels: usize) -> FrameTensor {
    FrameTensor::new(frames, channels, filled(r, frames * channels)).unwrap()
}

fn conv(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("conv1d");
    for channels in [32, 128] {
        let x = tensor(&mut r, 4096, channels);
        let full = ConvSpec::new(channels, channels, 7).with_padding(3, 3);
        let full = full.clone().with_weight(filled(&mut r, full.weight.len()));
        g.bench_with_input(BenchmarkId::new("full_k7", channels), &x, |b, x| {
            b.iter(|| conv1d(black_box(x), &full).unwrap())
        });
        let dw = ConvSpec::depthwise(channels, 7).with_padding(3, 3);
        let dw = dw.clone().with_weight(filled(&mut r, dw.weight.len()));
        g.bench_with_input(BenchmarkId::new("depthwise_k7", channels), &x, |b, x| {
            b.iter(|| conv1d(black_box(x), &dw).unwrap())
        });
        let up = ConvSpec::new(channels, channels / 2, 16)
            .with_stride(8)
            .with_padding(4, 4);
        let up = up.clone().with_weight(filled(&mut r, up.weight.len()));
        let short = tensor(&mut r, 512, channels);
        g.bench_with_input(
            BenchmarkId::new("transposed_s8", channels),
            &short,
            |b, x| b.iter(|| transposed_conv1d(black_box(x), &up).unwrap()),
        );
    }
    g.finish();
}

fn attention(c: &mut Criterion) {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let channels = 64;
    let mut p = AttentionParams::zeros(channels, channels);
    for l in [&mut p.query, &mut p.key, &mut p.value, &mut p.output] {
        l.weight = filled(&mut r, l.weight.len());
    }
    let x = tensor(&mut r, 1024, channels);
    c.bench_function("local_attention_w32", |b| {
        b.iter(|| local_windowed_attention(black_box(&x), &p, 32).unwrap())
    });
}

criterion_group!(benches, conv, attention);
criterion_main!(benches);
