//! Field to verdict to trajectory on one hand-checked quadratic candidate.

use hemi_core::census::{enumerate_census, existence_check, level_bands, Conclusion, TheoremChoice};
use hemi_core::flow::{Flow, FlowParams, RegionTag, Termination};
use hemi_core::geometry::ScalarField;
use hemi_core::landscape::Landscape;
use hemi_core::quadrature::compute_constants;
use hemi_core::reduced::{BubbleState, Configuration, ModelParams, ReducedModel};
use hemi_core::verify::quadratic_spec;

#[test]
fn quadratic_candidate_end_to_end() {
    let field = ScalarField::from_spec(quadratic_spec()).unwrap();
    let consts = compute_constants(5, 1e-8).unwrap();
    let landscape = Landscape::analyze(&field, 8).unwrap();
    assert!(landscape.assumptions.all(), "{:?}", landscape.assumptions.violations);

    let census = enumerate_census(&landscape.sets, 5, consts.s_n, 4);
    assert_eq!(census.len(), 7);
    let bands = level_bands(5, consts.s_n, landscape.k_min, landscape.k_max, 4);
    for e in &census {
        let b = &bands[e.mass - 1];
        assert!(b.min <= e.level * (1.0 + 1e-12) && e.level <= b.max * (1.0 + 1e-12));
    }
    assert!(census.windows(2).all(|w| w[0].level <= w[1].level));

    let report = existence_check(&landscape, TheoremChoice::Auto).unwrap();
    assert_eq!(report.conclusion, Conclusion::SolutionExists);
    assert!(report.decisive.is_some());

    // A single boundary bubble sitting on a boundary maximum concentrates further.
    let top = landscape.sets.k_infinity[0].location.clone();
    let model = ReducedModel::new(field, consts, ModelParams::default()).unwrap();
    let cfg = Configuration::new(
        1,
        0,
        vec![BubbleState {
            alpha: 1.0,
            point: top,
            lambda: 1e4,
        }],
        0.1,
    )
    .unwrap();
    let cfg = model.normalize_alphas(&cfg);
    let flow = Flow::new(&model, &landscape, FlowParams::default()).unwrap();
    let traj = flow.integrate(&cfg, 1.0).unwrap();
    assert_eq!(traj.termination, Termination::TimeLimit);
    assert!(traj.states.iter().all(|s| s.label.tag == RegionTag::W));
    let (first, last) = (&traj.states[0], traj.states.last().unwrap());
    assert!(last.config.bubbles[0].lambda > first.config.bubbles[0].lambda);
    assert!(traj
        .states
        .windows(2)
        .all(|w| w[1].j.center <= w[0].j.center + 1e-8 * (w[1].time - w[0].time)));
}
