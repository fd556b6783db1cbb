use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsbf_core::baselines::{run_scheme, Scheme, SchemeChoice};
use rsbf_core::channel::{build_uncertainty, deg, ChannelRealization, SystemConfig};
use rsbf_core::evaluation::{monte_carlo, trial_channel, MonteCarloSpec, SweepVariable};
use rsbf_core::rsbf::{q_step_problem, w_step_problem, BeamformingSolution, Mode};
use rsbf_core::sdp::solve;

fn small() -> SystemConfig {
    SystemConfig {
        m: 4,
        n_az: 2,
        n_el: 2,
        d_k: 4,
        rand_trials: 20,
        eval_samples: 40,
        ..SystemConfig::default()
    }
}

#[test]
fn channel_and_solution_survive_json() {
    let config = small();
    let channel = trial_channel(&config, 0).unwrap();
    let back = ChannelRealization::from_json(&channel.to_json()).unwrap();
    assert_eq!(back, channel);

    let set = build_uncertainty(&channel, deg(5.0), 0.0);
    let choice = SchemeChoice::new(Scheme::Robust, Mode::NonColluding);
    let sol = run_scheme(
        choice,
        &channel,
        &set,
        &config,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    assert_eq!(BeamformingSolution::from_json(&sol.to_json()).unwrap(), sol);
}

#[test]
fn dumped_step_problems_solve_to_reported_bounds() {
    let config = small();
    let channel = trial_channel(&config, 1).unwrap();
    let set = build_uncertainty(&channel, deg(5.0), 0.0);
    let choice = SchemeChoice::new(Scheme::Perfect, Mode::NonColluding);
    let sol = run_scheme(
        choice,
        &channel,
        &set,
        &config,
        &mut ChaCha8Rng::seed_from_u64(2),
    )
    .unwrap();
    let bank = rsbf_core::channel::SampleBank::single(&channel.g_true);

    let q_problem = q_step_problem(Mode::NonColluding, &sol.w, &bank, &channel.h_ab, &config);
    let w_problem = w_step_problem(&sol.q, &bank, &channel.h_ab, &config);
    for p in [&q_problem, &w_problem] {
        let mut text = Vec::new();
        p.write_dump(&mut text).unwrap();
        let text = String::from_utf8(text).unwrap();
        assert!(text.starts_with("%%SdpProblem"));
        let solved = solve(p).unwrap();
        assert!(solved.is_optimal());
        // the min-max value is 1 / ratio bound, and no feasible point beats it
        let bound = 1.0 / solved.objective_value;
        let ratio = rsbf_core::rsbf::noncolluding_ratio(
            &sol.w,
            &sol.q,
            &channel.h_ab,
            &bank,
            config.sigma0_sq,
        );
        assert!(ratio <= bound * (1.0 + 1e-6), "{ratio} > {bound}");
    }
}

#[test]
fn perfect_rows_are_judged_on_the_true_channel() {
    let spec = MonteCarloSpec {
        base: small(),
        delta_angle_deg: 8.0,
        delta_amp_db: 0.0,
        schemes: vec![
            SchemeChoice::new(Scheme::Perfect, Mode::Colluding),
            SchemeChoice::new(Scheme::Average, Mode::Colluding),
        ],
        variable: SweepVariable::DeltaAngle,
        values: vec![8.0],
        trials: 3,
    };
    let table = monte_carlo(&spec, Some(2)).unwrap();
    assert_eq!(table.rows.len(), 6);
    for row in &table.rows {
        assert!(!row.failed());
        if row.scheme == "perfect-colluding" {
            assert_eq!(row.worst_case_asr, row.nominal_asr);
        } else {
            assert!(row.worst_case_asr <= row.nominal_asr);
        }
    }
}
