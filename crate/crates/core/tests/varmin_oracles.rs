use flowldp_core::pathmaps::HittingSet;
use flowldp_core::varmin::{minimize_rate, Constraint, Functional, Tolerances, VariationalProblem, VariationalSolution};

fn solve(functional: Functional, constraint: Constraint<f64>, steps: usize, starts: Vec<f64>) -> VariationalSolution<f64> {
    let p = VariationalProblem {
        functional,
        constraint,
        steps,
        starts,
    };
    minimize_rate(&p, &Tolerances::default()).unwrap()
}

/// Pair `(p, q)` meets at `a` at time `t1`; the cluster meets `r` at `b`
/// at time `t2`. The quadratic in `(a, b)` is minimised exactly.
fn two_merge_cost(sp: f64, sq: f64, sr: f64, t1: f64, t2: f64) -> f64 {
    let d = t2 - t1;
    if d <= 0.0 {
        let m = (sp + sq + sr) / 3.0;
        return 0.5 * [sp, sq, sr].iter().map(|s| (m - s).powi(2)).sum::<f64>() / t1;
    }
    // ∂a: (2a - sp - sq)/t1 - (b - a)/d = 0,  ∂b: (b - a)/d + (b - sr)/t2 = 0
    let (a11, a12, c1) = (2.0 / t1 + 1.0 / d, -1.0 / d, (sp + sq) / t1);
    let (a21, a22, c2) = (-1.0 / d, 1.0 / d + 1.0 / t2, sr / t2);
    let det = a11 * a22 - a12 * a21;
    let a = (c1 * a22 - a12 * c2) / det;
    let b = (a11 * c2 - a21 * c1) / det;
    0.5 * ((a - sp).powi(2) / t1 + (a - sq).powi(2) / t1 + (b - a).powi(2) / d + (b - sr).powi(2) / t2)
}

fn three_particle_oracle(s: [f64; 3], t_c: f64) -> f64 {
    let grid = 600;
    let mut best = f64::INFINITY;
    for i in 1..=grid {
        let t2 = t_c * i as f64 / grid as f64;
        for j in 1..=i {
            let t1 = t2 * j as f64 / i as f64;
            best = best
                .min(two_merge_cost(s[0], s[1], s[2], t1, t2))
                .min(two_merge_cost(s[1], s[2], s[0], t1, t2));
        }
    }
    best
}

#[test]
fn three_particle_coalescence_matches_brute_force() {
    for (s, t_c) in [([0.0, 1.0, 2.0], 1.0), ([0.0, 0.3, 2.0], 1.0), ([-1.0, 0.5, 0.8], 0.6)] {
        let sol = solve(Functional::NpointCoalescing, Constraint::CoalesceBy(t_c), 32, s.to_vec());
        let want = three_particle_oracle(s, t_c);
        // the grid oracle can only overestimate, up to the solver's O(l_min²)
        // cost for a simultaneous triple meeting
        assert!(sol.value <= want * (1.0 + 1e-7), "{s:?}: {} vs {want}", sol.value);
        assert!((sol.value - want).abs() <= 1e-4 * want, "{s:?}: {} vs {want}", sol.value);
        assert!(sol.gradient_check <= 1e-5, "{s:?}: {}", sol.gradient_check);
    }
}

fn closed_form_problems(steps: usize) -> Vec<(VariationalProblem<f64>, f64)> {
    let (d, c) = (1.3, 1.7);
    vec![
        (
            VariationalProblem {
                functional: Functional::Schilder1d,
                constraint: Constraint::EndpointAtLeast(1.0),
                steps,
                starts: vec![0.0],
            },
            0.5,
        ),
        (
            VariationalProblem {
                functional: Functional::NpointCoalescing,
                constraint: Constraint::CoalesceBy(1.0),
                steps,
                starts: vec![0.0, d],
            },
            d * d / 4.0,
        ),
        (
            VariationalProblem {
                functional: Functional::Stopped,
                constraint: Constraint::HitSetBy {
                    set: HittingSet::halfspace(vec![1.0], c).unwrap(),
                    t_c: 1.0,
                },
                steps,
                starts: vec![0.0],
            },
            c * c / 2.0,
        ),
    ]
}

#[test]
fn closed_form_values_survive_refinement() {
    let tol = Tolerances::default();
    for (coarse, fine) in closed_form_problems(16).into_iter().zip(closed_form_problems(32)) {
        let a = minimize_rate(&coarse.0, &tol).unwrap();
        let b = minimize_rate(&fine.0, &tol).unwrap();
        assert!((a.value - coarse.1).abs() <= 1e-6, "{:?}: {}", coarse.0.functional, a.value);
        assert!((b.value - a.value).abs() <= 1e-6);
        assert!(a.gradient_check <= 1e-5 && b.gradient_check <= 1e-5);
        assert!(a.converged && b.converged);
    }
}

#[test]
fn larger_constraint_sets_lower_the_value() {
    let mut last = f64::INFINITY;
    for c in [2.0, 1.5, 1.0, 0.5, 0.25] {
        let v = solve(Functional::Schilder1d, Constraint::EndpointAtLeast(c), 16, vec![0.0]).value;
        assert!(v <= last + 1e-12);
        assert!((v - c * c / 2.0).abs() <= 1e-6);
        last = v;
    }
    let mut last = f64::INFINITY;
    for t_c in [0.25, 0.5, 0.75, 1.0] {
        let v = solve(Functional::NpointCoalescing, Constraint::CoalesceBy(t_c), 16, vec![0.0, 1.0]).value;
        assert!(v <= last + 1e-12);
        // meeting at the midpoint by t_c
        assert!((v - 0.25 / t_c).abs() <= 1e-6, "{t_c}: {v}");
        last = v;
    }
}

#[test]
fn box_and_union_targets() {
    let s = solve(
        Functional::Schilder1d,
        Constraint::EndpointInBox { lo: 0.5, hi: 2.0 },
        16,
        vec![-0.5],
    );
    assert!((s.value - 0.5).abs() <= 1e-6);
    let inside = solve(
        Functional::Schilder1d,
        Constraint::EndpointInBox { lo: -1.0, hi: 1.0 },
        16,
        vec![0.2],
    );
    assert!(inside.value.abs() <= 1e-10);

    // 2-d stopped: nearest box of the union, reached by time ½
    let set: HittingSet<f64> = serde_json::from_str(
        r#"{"kind":"finite_union","boxes":[{"lo":[3.0,3.0],"hi":[4.0,4.0]},{"lo":[1.0,-0.5],"hi":[2.0,0.5]}]}"#,
    )
    .unwrap();
    let s = solve(Functional::Stopped, Constraint::HitSetBy { set, t_c: 0.5 }, 16, vec![0.0, 0.0]);
    assert!((s.value - 1.0).abs() <= 1e-6, "{}", s.value);
    assert!(s.gradient_check <= 1e-5);
}
