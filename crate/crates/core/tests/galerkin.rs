use affine_core::galerkin::{convergence_study, solve_critical_point, GalerkinProblem, ProblemSpec, SolveStatus, SourceTerm};

fn constant_one(m: usize) -> ProblemSpec {
    ProblemSpec::new(2.0, 1.5, SourceTerm::Constant { value: 1.0 }, m)
}

#[test]
fn constant_source_solve_is_certified() {
    let problem = GalerkinProblem::new(constant_one(10)).unwrap();
    let res = solve_critical_point(&problem, 1).unwrap();
    assert_eq!(res.status, SolveStatus::Certified);
    assert!(res.residual_sup <= 1e-8);
    assert!(res.energy <= res.rho_used * (1.0 + 1e-9));
    assert!(res.identity_gap <= 1e-6 * (1.0 + res.energy_p));
    assert!(res.l2_norm_of_u > 0.0);
}

#[test]
fn single_entry_sweep_has_no_differences() {
    let table = convergence_study(&constant_one(3), &[3], 2.0, 0).unwrap();
    assert_eq!(table.rows.len(), 1);
    assert!(table.differences.is_empty());
}

#[test]
fn polynomial_source_solve_is_certified() {
    let source = SourceTerm::parse("poly:1,0,2.0;0,1,-1.0").unwrap();
    let problem = GalerkinProblem::new(ProblemSpec::new(2.0, 1.3, source, 6)).unwrap();
    let res = solve_critical_point(&problem, 2).unwrap();
    assert_eq!(res.status, SolveStatus::Certified);
    assert!(res.certificates.all());
    // the field vanishes at the returned point
    let f = problem.assemble_f(&res.zeta_star).unwrap();
    assert!(f.iter().all(|v| v.abs() <= 1e-8));
}

#[test]
fn sine_source_with_p_above_two() {
    let source = SourceTerm::parse("sine:1,2,3.0").unwrap();
    let problem = GalerkinProblem::new(ProblemSpec::new(2.5, 1.5, source, 4)).unwrap();
    let res = solve_critical_point(&problem, 5).unwrap();
    assert_eq!(res.status, SolveStatus::Certified);
    assert!(res.energy <= res.rho_used);
    assert!(res.boundary_min_pairing > 0.0);
}

#[test]
fn solve_is_deterministic() {
    let problem = GalerkinProblem::new(constant_one(4)).unwrap();
    let a = solve_critical_point(&problem, 9).unwrap();
    let b = solve_critical_point(&problem, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sweep_reports_cauchy_differences() {
    let table = convergence_study(&constant_one(3), &[3, 6, 10], 2.0, 1).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert_eq!(table.differences.len(), 2);
    assert!(table.rows.iter().all(|r| r.status == SolveStatus::Certified));
    for (d, pair) in table.differences.iter().zip([(3, 6), (6, 10)]) {
        assert_eq!((d.m_from, d.m_to), pair);
        assert!(d.ls_diff.is_finite() && d.ls_diff > 0.0);
    }
    let max = table.rows.iter().map(|r| r.energy_p).fold(0.0, f64::max);
    assert_eq!(max, table.max_energy_p);
}
