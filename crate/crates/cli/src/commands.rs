use std::fs;
use std::path::PathBuf;

use disorder_core::equilibrium::{reachable_grids, EquilibriumSolution};
use disorder_core::fusion::evaluate_fusion_mc;
use disorder_core::mc::{Estimate, PolicyEstimate};
use disorder_core::model::simulate_net;
use disorder_core::posterior::filter_path;
use disorder_core::single_solver::DEFAULT_TREE_LIMIT;
use disorder_core::{compare, solve_fixed_point, solve_game, verify_equilibrium, NaiveFusion, PiGrid, SimpleGame};
use log::info;

use crate::config::{Command, RunConfig};
use crate::output::{float, opt_float, Artifact};
use crate::{selfcheck, Failure};

pub use disorder_core::mc::hex;

pub fn dispatch(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    fs::create_dir_all(&cfg.out)?;
    match cfg.command {
        Command::Validate => validate(cfg),
        Command::Simulate => simulate(cfg),
        Command::Filter => filter(cfg),
        Command::SolveSensor => solve_sensor(cfg),
        Command::SolveGame => solve_game_cmd(cfg),
        Command::FuseNaive => fuse_naive(cfg),
        Command::Verify => verify(cfg),
        Command::Compare => compare_cmd(cfg),
    }
}

fn artifact(cfg: &RunConfig, name: &str) -> Artifact {
    Artifact::new(&cfg.out, name, &cfg.header())
}

/// The model's game; a single sensor decides alone if none is given.
fn game(cfg: &RunConfig) -> Result<SimpleGame, Failure> {
    match &cfg.model.game {
        Some(g) => Ok(g.clone()),
        None if cfg.model.net.size() == 1 => Ok(SimpleGame::dictator(1, 0)?),
        None => Err(Failure::Invalid("this command needs a [game] block in the model file".into())),
    }
}

fn grids(cfg: &RunConfig) -> Result<Vec<PiGrid>, Failure> {
    match cfg.grid {
        Some(steps) => Ok(vec![PiGrid::uniform(steps)?; cfg.model.net.size()]),
        None => Ok(reachable_grids(&cfg.model.net)),
    }
}

fn coalitions(game: &SimpleGame) -> String {
    game.minimal_winning().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn validate(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let net = &cfg.model.net;
    let mut a = artifact(cfg, "validation.txt");
    a.line(format!("sensors: {}", net.size()));
    a.line(format!("horizon: {}", net.horizon));
    for (r, s) in net.sensors.iter().enumerate() {
        a.line(format!(
            "sensor {}: states={} x0={} pi0={} p={} c={}",
            r + 1,
            s.states(),
            s.initial_state,
            float(s.prior.pi0()),
            float(s.prior.p()),
            float(s.delay_cost)
        ));
    }
    match &cfg.model.game {
        Some(g) => a.line(format!("game: minimal winning coalitions {}", coalitions(g))),
        None => a.line("game: none"),
    }
    a.line("status: ok");
    Ok(vec![a.save()?])
}

fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let net = &cfg.model.net;
    let mut a = artifact(cfg, "paths.csv");
    a.line("rep,sensor,theta,n,x,pi");
    for rep in 0..cfg.reps {
        let (paths, _) = simulate_net(net, cfg.seed, rep);
        for (r, path) in paths.iter().enumerate() {
            let pis = filter_path(&path.observations, &net.sensors[r])?;
            if cfg.self_check && path.observations[0] != net.sensors[r].initial_state {
                return Err(Failure::Contract("simulated path does not start at x0".into()));
            }
            for (n, (&x, &pi)) in path.observations.iter().zip(&pis).enumerate() {
                a.row([rep.to_string(), (r + 1).to_string(), path.theta.to_string(), n.to_string(), x.to_string(), float(pi)]);
            }
        }
    }
    Ok(vec![a.save()?])
}

fn filter(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let net = &cfg.model.net;
    let mut runs: Vec<(u64, usize, Vec<usize>)> = Vec::new();
    match &cfg.observations {
        Some(obs) => {
            let r = cfg.sensor - 1;
            if obs.is_empty() || obs.iter().any(|&x| x >= net.sensors[r].states()) {
                return Err(Failure::Invalid(format!(
                    "observations must be symbols in 0..{}",
                    net.sensors[r].states()
                )));
            }
            runs.push((0, r, obs.clone()));
        }
        None => {
            for rep in 0..cfg.reps {
                let (paths, _) = simulate_net(net, cfg.seed, rep);
                runs.extend(paths.into_iter().enumerate().map(|(r, p)| (rep, r, p.observations)));
            }
        }
    }
    let mut a = artifact(cfg, "filter.csv");
    a.line("rep,sensor,n,x,pi");
    for (rep, r, obs) in &runs {
        let pis = filter_path(obs, &net.sensors[*r])?;
        if cfg.self_check {
            selfcheck::posterior(&net.sensors[*r], obs, &pis)?;
        }
        for (n, (&x, &pi)) in obs.iter().zip(&pis).enumerate() {
            a.row([rep.to_string(), (r + 1).to_string(), n.to_string(), x.to_string(), float(pi)]);
        }
    }
    Ok(vec![a.save()?])
}

fn solve_sensor(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let steps = cfg.grid.unwrap_or(1000);
    let grid = PiGrid::uniform(steps)?;
    let mut written = Vec::new();
    for (r, model) in cfg.model.net.sensors.iter().enumerate() {
        info!("solving sensor {} on {} grid points", r + 1, grid.len());
        let fp = solve_fixed_point(model, &grid, cfg.tol, cfg.max_iter)?;
        if cfg.self_check {
            selfcheck::bellman(model, &grid, &fp.value, cfg.tol)?;
        }
        let id = r + 1;
        let mut values = artifact(cfg, &format!("sensor{id}_values.csv"));
        values.line("x,pi,value,stop");
        for x in 0..model.states() {
            for (g, &pi) in grid.points().iter().enumerate() {
                values.row([x.to_string(), float(pi), float(fp.value.get(x, g)), u8::from(fp.region.stops(x, g)).to_string()]);
            }
        }
        let mut thresholds = artifact(cfg, &format!("sensor{id}_thresholds.csv"));
        thresholds.line("x,threshold,upper_set");
        for x in 0..model.states() {
            thresholds.row([x.to_string(), opt_float(fp.region.thresholds[x]), u8::from(fp.region.upper_set[x]).to_string()]);
        }
        let mut conv = artifact(cfg, &format!("sensor{id}_convergence.csv"));
        conv.line("iteration,residual");
        for (k, res) in fp.residuals.iter().enumerate() {
            conv.row([(k + 1).to_string(), float(*res)]);
        }
        written.extend([values.save()?, thresholds.save()?, conv.save()?]);
    }
    Ok(written)
}

fn solve(cfg: &RunConfig, game: &SimpleGame) -> Result<EquilibriumSolution, Failure> {
    let grids = grids(cfg)?;
    info!("solving the game on {:?} grid points per sensor", grids.iter().map(PiGrid::len).collect::<Vec<_>>());
    let sol = solve_game(&cfg.model.net, game, grids, cfg.budget)?;
    if cfg.self_check {
        selfcheck::stage_values(&sol)?;
    }
    Ok(sol)
}

fn diagnostics(a: &mut Artifact, sol: &EquilibriumSolution) {
    a.line(format!("game: minimal winning coalitions {}", coalitions(&sol.game)));
    a.line(format!(
        "grid points per sensor: {}",
        sol.grid.grids().iter().map(|g| g.len().to_string()).collect::<Vec<_>>().join(" ")
    ));
    a.line(format!("joint states: {}", sol.grid.len()));
    for (k, st) in sol.stages.iter().enumerate() {
        a.line(format!(
            "stage {k} (time {}): best-response iterations {}, cycle {}, canonical {}, pivotal states {}",
            sol.horizon - k,
            st.iterations,
            st.cycle,
            st.canonical,
            st.pivotal_states.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
        ));
    }
    let flagged: Vec<usize> = (0..sol.stages.len()).filter(|&k| sol.stages[k].cycle).collect();
    a.line(format!("flagged stages: {}", if flagged.is_empty() { "none".to_string() } else { format!("{flagged:?}") }));
    a.line(format!(
        "initial values: {}",
        sol.initial_values().iter().map(|v| float(*v)).collect::<Vec<_>>().join(" ")
    ));
}

fn solve_game_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let game = game(cfg)?;
    let sol = solve(cfg, &game)?;
    let p = game.players();
    let mut values = artifact(cfg, "game_values.csv");
    let mut head: Vec<String> = vec!["stage".into(), "time".into()];
    head.extend((1..=p).map(|r| format!("x{r}")));
    head.extend((1..=p).map(|r| format!("pi{r}")));
    head.extend(["player", "value", "entry_value", "stop"].map(String::from));
    values.row(head);
    for (k, st) in sol.stages.iter().enumerate() {
        for s in 0..sol.grid.len() {
            let mut prefix = vec![k.to_string(), (sol.horizon - k).to_string()];
            prefix.extend((0..p).map(|r| sol.grid.local(s, r).0.to_string()));
            prefix.extend((0..p).map(|r| float(sol.grid.pi(s, r))));
            for i in 0..p {
                let mut row = prefix.clone();
                row.extend([
                    (i + 1).to_string(),
                    float(st.values[i][s]),
                    float(st.entry_values[i][s]),
                    u8::from(st.stop[i][s]).to_string(),
                ]);
                values.row(row);
            }
        }
    }
    let mut summary = artifact(cfg, "game_stop_summary.csv");
    summary.line("stage,time,player,stop_states,pivotal_states,states");
    for (k, st) in sol.stages.iter().enumerate() {
        for i in 0..p {
            summary.row([
                k.to_string(),
                (sol.horizon - k).to_string(),
                (i + 1).to_string(),
                st.stop[i].iter().filter(|&&b| b).count().to_string(),
                st.pivotal_states[i].to_string(),
                sol.grid.len().to_string(),
            ]);
        }
    }
    let mut diag = artifact(cfg, "game_diagnostics.txt");
    diagnostics(&mut diag, &sol);
    Ok(vec![values.save()?, summary.save()?, diag.save()?])
}

fn verify(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let game = game(cfg)?;
    let sol = solve(cfg, &game)?;
    let report = verify_equilibrium(&sol, cfg.deviations, cfg.seed, DEFAULT_TREE_LIMIT)?;
    let mut a = artifact(cfg, "deviation_report.csv");
    a.line("player,base_risk,single_flips,random_flips,max_decrease,passed,worst");
    for (i, p) in report.players.iter().enumerate() {
        a.row([
            (i + 1).to_string(),
            float(p.base_risk),
            p.single_flips.to_string(),
            p.random_flips.to_string(),
            float(p.max_decrease),
            u8::from(p.max_decrease <= report.tolerance).to_string(),
            p.worst.clone().unwrap_or_else(|| "none".into()),
        ]);
    }
    let path = a.save()?;
    println!("max risk decrease: {}", float(report.max_decrease()));
    if !report.passed() && sol.cycle_free() {
        return Err(Failure::Contract(format!(
            "a unilateral deviation lowers risk by {:e} (tolerance {:e})",
            report.max_decrease(),
            report.tolerance
        )));
    }
    Ok(vec![path])
}

fn estimate_rows(a: &mut Artifact, policy: &str, e: &PolicyEstimate) {
    for (r, s) in e.sensors.iter().enumerate() {
        a.row([
            policy.to_string(),
            (r + 1).to_string(),
            float(s.false_alarm.mean),
            opt_float(s.false_alarm.se),
            float(s.delay.mean),
            opt_float(s.delay.se),
            float(s.risk.mean),
            opt_float(s.risk.se),
            s.reps.to_string(),
        ]);
    }
}

fn alarm_line(a: &mut Artifact, policy: &str, t: Estimate) {
    a.line(format!("# {policy} mean alarm time: {} (se {})", float(t.mean), opt_float(t.se)));
}

const ESTIMATE_HEADER: &str = "policy,sensor,false_alarm,false_alarm_se,delay,delay_se,risk,risk_se,reps";

fn fuse_naive(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let game = game(cfg)?;
    let net = &cfg.model.net;
    let fusion = NaiveFusion::solve(net, &grids(cfg)?)?;
    let report = evaluate_fusion_mc(net, &game, &fusion, cfg.reps, cfg.seed)?;
    if cfg.self_check {
        selfcheck::mc_against_exact(net, &game, &fusion, &report.estimate)?;
    }
    let mut a = artifact(cfg, "fusion_report.csv");
    a.line(format!("# paths sha256: {}", report.estimate.digest_hex()));
    alarm_line(&mut a, "naive", report.estimate.alarm_time);
    a.line(ESTIMATE_HEADER);
    estimate_rows(&mut a, "naive", &report.estimate);
    Ok(vec![a.save()?])
}

fn compare_cmd(cfg: &RunConfig) -> Result<Vec<PathBuf>, Failure> {
    let game = game(cfg)?;
    let net = &cfg.model.net;
    let sol = solve(cfg, &game)?;
    let fusion = NaiveFusion::solve(net, sol.grid.grids())?;
    let report = compare(net, &game, &fusion, &sol, cfg.reps, cfg.seed)?;
    if report.naive.digest != report.equilibrium.digest {
        return Err(Failure::Contract("compared policies saw different paths".into()));
    }
    let mut a = artifact(cfg, "comparison.csv");
    a.line(format!("# paths sha256: {}", report.naive.digest_hex()));
    alarm_line(&mut a, "naive", report.naive.alarm_time);
    alarm_line(&mut a, "equilibrium", report.equilibrium.alarm_time);
    a.line(ESTIMATE_HEADER);
    estimate_rows(&mut a, "naive", &report.naive);
    estimate_rows(&mut a, "equilibrium", &report.equilibrium);
    for (r, d) in report.difference.iter().enumerate() {
        a.row([
            "equilibrium-naive".to_string(),
            (r + 1).to_string(),
            "NA".into(),
            "NA".into(),
            "NA".into(),
            "NA".into(),
            float(d.mean),
            opt_float(d.se),
            cfg.reps.to_string(),
        ]);
    }
    let mut diag = artifact(cfg, "comparison_diagnostics.txt");
    diag.line(format!("replications: {}", cfg.reps));
    diag.line(format!("paths sha256 (naive): {}", report.naive.digest_hex()));
    diag.line(format!("paths sha256 (equilibrium): {}", report.equilibrium.digest_hex()));
    diagnostics(&mut diag, &sol);
    for (r, d) in report.difference.iter().enumerate() {
        let sign = match d.mean.partial_cmp(&0.0) {
            Some(std::cmp::Ordering::Less) => "equilibrium lower",
            Some(std::cmp::Ordering::Greater) => "naive lower",
            _ => "equal",
        };
        diag.line(format!("sensor {}: risk difference {} (se {}): {sign}", r + 1, float(d.mean), opt_float(d.se)));
    }
    Ok(vec![a.save()?, diag.save()?])
}
