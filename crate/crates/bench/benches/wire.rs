use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use splitplan_core::wire::{decode_frame, encode_frame, generate_tensor, Codec, TensorSource};
use splitplan_core::{DataType, TensorShape};

fn frames(c: &mut Criterion) {
    let shape = TensorShape::chw(3, 200, 200);
    let mut group = c.benchmark_group("frame");
    for source in [TensorSource::RandomUniform, TensorSource::Smooth, TensorSource::AllZero] {
        let payload = generate_tensor(source, &shape, DataType::F32, 1);
        group.throughput(Throughput::Bytes(payload.len() as u64));
        for codec in [Codec::None, Codec::Deflate] {
            let id = format!("{source:?}/{codec:?}");
            group.bench_with_input(BenchmarkId::new("encode", &id), &payload, |b, p| {
                b.iter(|| encode_frame(&shape, DataType::F32, black_box(p), codec).unwrap().len())
            });
            let frame = encode_frame(&shape, DataType::F32, &payload, codec).unwrap();
            group.bench_with_input(BenchmarkId::new("decode", &id), &frame, |b, f| {
                b.iter(|| decode_frame(black_box(f)).unwrap().payload.len())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, frames);
criterion_main!(benches);
