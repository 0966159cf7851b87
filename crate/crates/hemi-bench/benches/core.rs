use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hemi_core::flow::{Flow, FlowParams};
use hemi_core::geometry::{FieldSpec, ScalarField, SpherePoint};
use hemi_core::landscape::Landscape;
use hemi_core::quadrature::{compute_constants, ConstantsTable};
use hemi_core::reduced::{BubbleState, Configuration, ModelParams, ReducedModel};

fn field() -> ScalarField {
    let spec = FieldSpec::constant(5, 1.0).with("x1", 0.05).with("x6", -0.05);
    ScalarField::from_spec(spec).unwrap()
}

/// Two boundary bubbles near the maximum of `K_1`.
fn pair(model: &ReducedModel) -> Configuration {
    let a = SpherePoint::normalized(nalgebra::DVector::from_vec(vec![1.0, 0.3, 0.0, 0.0, 0.0, 0.0])).unwrap();
    let b = SpherePoint::normalized(nalgebra::DVector::from_vec(vec![1.0, -0.3, 0.0, 0.0, 0.0, 0.0])).unwrap();
    let bubbles = vec![
        BubbleState {
            alpha: 0.05,
            point: a,
            lambda: 200.0,
        },
        BubbleState {
            alpha: 0.05,
            point: b,
            lambda: 300.0,
        },
    ];
    model.normalize_alphas(&Configuration::new(2, 0, bubbles, 0.1).unwrap())
}

fn bench_core(c: &mut Criterion) {
    let model = ReducedModel::new(field(), ConstantsTable::closed_form(5), ModelParams::default()).unwrap();
    let landscape = Landscape::analyze(model.field(), 8).unwrap();
    let flow = Flow::new(&model, &landscape, FlowParams::default()).unwrap();
    let cfg = pair(&model);

    c.bench_function("constants_n5", |b| {
        b.iter(|| compute_constants(black_box(5), 1e-8).unwrap())
    });
    c.bench_function("reduced_j", |b| b.iter(|| model.reduced_j_unchecked(black_box(&cfg))));
    c.bench_function("gradient_components", |b| {
        b.iter(|| model.gradient_components(black_box(&cfg)).unwrap())
    });
    c.bench_function("pseudogradient", |b| {
        b.iter(|| flow.pseudogradient(black_box(&cfg)).unwrap())
    });

    let mut group = c.benchmark_group("landscape");
    group.sample_size(10);
    group.bench_function("analyze", |b| {
        b.iter(|| Landscape::analyze(black_box(model.field()), 8).unwrap())
    });
    group.finish();
}

criterion_group!(benches, bench_core);
criterion_main!(benches);
