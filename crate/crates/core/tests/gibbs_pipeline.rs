use mixcure::data::{simulate, Censoring, CovariateGen, SimSpec};
use mixcure::gibbs::{converged, run_chain, ConvergenceRule, GibbsConfig};
use mixcure::marginal::Mixture;
use mixcure::oracle::{enumerate_posterior, QuadratureSpec};
use mixcure::{
    Approximation, ConditionalFit, LaplaceConfig, LatencyFamily, LatentAssignment, Marginal, ParameterPoint, PriorSpec,
};

const FAM: LatencyFamily = LatencyFamily::WeibullPh;

#[test]
fn ecog_sized_run_stabilizes_early() {
    let gen = |p| CovariateGen::Bernoulli { p };
    let spec = SimSpec {
        n: 284,
        covariates: vec![
            ("age".into(), CovariateGen::Normal { mean: 0.0, sd: 1.0 }),
            ("sex".into(), gen(0.4)),
            ("trt".into(), gen(0.5)),
        ],
        beta_inc: vec![-1.2, 0.2, -0.3, 0.6],
        beta_lat: vec![-0.3, 0.1, 0.2, -0.4],
        shape: 1.2,
        family: FAM,
        censoring: Censoring { admin: Some(6.0), rate: Some(0.02) },
        seed: 7,
    };
    let d = simulate(&spec).unwrap().0;
    let cfg = GibbsConfig {
        burnin: 50,
        keep: 90,
        thin: 5,
        laplace: LaplaceConfig { approximation: Approximation::Gaussian, ..LaplaceConfig::default() },
        ..GibbsConfig::default()
    };
    let chain = run_chain(&d, &PriorSpec::default(), FAM, &cfg).unwrap();
    assert_eq!(chain.cml_trace.len(), 500);
    let rule = ConvergenceRule::default();
    let report = converged(&chain.cml_trace[..250], &rule).unwrap();
    assert!(report.converged, "{report:?}");
    for s in &chain.kept {
        assert!((0..d.n()).all(|i| !(d.events()[i] && s.z.is_cured(i))));
    }
}

#[test]
fn configuration_average_reproduces_the_full_marginals() {
    let spec = PriorSpec::default().with_override(0, 0.0, 4.0);
    let d = (1..40)
        .map(|seed| {
            let sim = SimSpec {
                n: 12,
                covariates: vec![],
                beta_inc: vec![0.0],
                beta_lat: vec![0.0],
                shape: 1.2,
                family: FAM,
                censoring: Censoring { admin: Some(3.0), rate: None },
                seed,
            };
            simulate(&sim).unwrap().0
        })
        .find(|d| (3..=5).contains(&d.n_censored()))
        .unwrap();
    let o = enumerate_posterior(&d, &spec, FAM, &QuadratureSpec::default()).unwrap();
    let cfg = LaplaceConfig::default();
    let mut weights = Vec::new();
    let mut parts: Vec<Vec<Mixture<mixcure::GridDensity>>> = vec![Vec::new(); 2];
    let mut shape = Vec::new();
    for c in &o.configs {
        let z = LatentAssignment::from_censored(&d, &c.pattern).unwrap();
        let f = ConditionalFit::fit(&d, &z, &spec, FAM, &ParameterPoint::for_dataset(&d), &cfg).unwrap();
        weights.push(c.prob);
        for (j, part) in parts.iter_mut().enumerate() {
            part.push(f.refined_marginal_of(&d, &z, &spec, j, &cfg.newton).unwrap());
        }
        shape.push(f.marginal_of_log_shape());
    }
    for (j, part) in parts.into_iter().enumerate() {
        let m = Mixture::weighted(weights.clone(), part);
        assert!((m.mean() - o.means[j]).abs() < 0.02, "coef {j}: {} vs {}", m.mean(), o.means[j]);
    }
    let s = Mixture::weighted(weights, shape);
    assert!((s.mean() - o.means[2]).abs() < 0.02);
}
