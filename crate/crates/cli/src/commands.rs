use std::path::{Path, PathBuf};
use std::sync::Arc;

use apex_core::dynamics::{ParamId, RandomizationMode, VehicleParams};
use apex_core::env::{ActionSpace, EnvConfig, RacingEnv, TrackRepresentation};
use apex_core::evalkit::{export_report, run_eval, Controller, EvalReport, PolicyController, PurePursuit};
use apex_core::kv::KvFile;
use apex_core::sysid::{self, SynthOptions, SysIdConfig};
use apex_core::track::{self, shapes, TrackDefinition, TrackOptions};
use apex_core::trainer::{self, Checkpoint, PpoConfig};

use crate::manifest::RunManifest;
use crate::{input, CliError, EnvArgs, EvalArgs, ParamsArgs, Shape, SynthArgs, SysidArgs, TrackCmd, TrainArgs};

/// Flag, then `APEX_SEED`, then the configured value.
fn resolve_seed(flag: Option<u64>, configured: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("APEX_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| CliError::usage(format!("APEX_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(configured),
    }
}

/// `KEY=VALUE` flags as a key-value file.
fn overrides(items: &[String]) -> Result<KvFile, CliError> {
    let mut text = String::new();
    for item in items {
        if !item.contains('=') {
            return Err(CliError::usage(format!("expected KEY=VALUE, got `{item}`")));
        }
        text.push_str(item);
        text.push('\n');
    }
    Ok(KvFile::parse(&text)?)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

pub fn apply_ablation(cfg: &mut EnvConfig, name: &str) -> Result<(), CliError> {
    let sigma = |rest: &str| {
        rest.parse::<f64>()
            .ok()
            .filter(|s| s.is_finite() && *s >= 0.0)
            .ok_or_else(|| CliError::usage(format!("invalid randomization scale in ablation `{name}`")))
    };
    match name {
        "obs-s" => cfg.track_representation = TrackRepresentation::Progress,
        "wheel-speed" => cfg.action_space = ActionSpace::WheelSpeed,
        "no-actuators" => cfg.model_actuators = false,
        _ => {
            if let Some(rest) = name.strip_prefix("dr-friction-") {
                cfg.randomization.sigma_dr = sigma(rest)?;
                cfg.randomization.mode = RandomizationMode::FrictionOnly;
            } else if let Some(rest) = name.strip_prefix("dr-all-") {
                cfg.randomization.sigma_dr = sigma(rest)?;
                cfg.randomization.mode = RandomizationMode::AllSingleTrack;
            } else {
                return Err(CliError::usage(format!(
                    "unknown ablation `{name}` (expected obs-s, wheel-speed, no-actuators, dr-friction-<σ> or dr-all-<σ>)"
                )));
            }
        }
    }
    Ok(())
}

struct Setup {
    config: EnvConfig,
    track: Arc<TrackDefinition>,
    track_path: Option<PathBuf>,
    params: VehicleParams,
    params_path: Option<PathBuf>,
}

/// Defaults < config file < ablation preset < `--env` overrides < path flags.
fn env_setup(a: &EnvArgs) -> Result<Setup, CliError> {
    let mut config = match &a.env_config {
        Some(p) => input(EnvConfig::load(p))?,
        None => EnvConfig::default(),
    };
    if let Some(name) = &a.ablation {
        apply_ablation(&mut config, name)?;
    }
    config.apply_kv(&overrides(&a.env_set)?, None)?;
    if a.track.is_some() {
        config.track = a.track.clone();
    }
    if a.params.is_some() {
        config.params = a.params.clone();
    }
    config.validate()?;
    let opts = TrackOptions {
        vehicle_half_width: config.vehicle_half_width,
        ..TrackOptions::default()
    };
    let track = match &config.track {
        Some(p) => input(track::load_track(p, opts))?,
        None => TrackDefinition::from_waypoints(&shapes::oval(17.0, 1.0), opts)?,
    };
    let params = match &config.params {
        Some(p) => input(VehicleParams::load(p))?,
        None => VehicleParams::default(),
    };
    Ok(Setup {
        track_path: config.track.clone(),
        params_path: config.params.clone(),
        config,
        track: Arc::new(track),
        params,
    })
}

pub fn track(cmd: TrackCmd) -> Result<(), CliError> {
    match cmd {
        TrackCmd::Gen { shape, length, width, seed, out } => {
            if !(length > 0.0 && width > 0.0) {
                return Err(CliError::usage("--length and --width must be positive"));
            }
            let wp = match shape {
                Shape::Oval => shapes::oval(length, width),
                Shape::Lshape => shapes::lshape(length, width),
                Shape::Random => shapes::random(length, width, resolve_seed(seed, 0)?),
            };
            let t = TrackDefinition::from_waypoints(&wp, TrackOptions::default())?;
            track::write_waypoints(&out, &wp)?;
            println!("wrote {} ({} waypoints, centerline {:.3} m)", out.display(), wp.len(), t.total_length());
        }
        TrackCmd::Validate { path, opts } => {
            let wp = input(track::read_waypoints(&path))?;
            let t = TrackDefinition::from_waypoints(&wp, track_options(opts)).map_err(|e| CliError::runtime(e.to_string()))?;
            t.validate().map_err(|e| CliError::runtime(e.to_string()))?;
            println!("ok: {} m, {} samples", t.total_length(), t.len());
        }
        TrackCmd::Resample { path, out, opts } => {
            let t = input(track::load_track(&path, track_options(opts)))?;
            track::write_resampled(&out, &t)?;
            println!("wrote {} ({} samples)", out.display(), t.len());
        }
    }
    Ok(())
}

fn track_options(o: crate::TrackOpts) -> TrackOptions {
    TrackOptions {
        resolution: o.resolution,
        vehicle_half_width: o.vehicle_half_width,
        ..TrackOptions::default()
    }
}

fn name_value(item: &str) -> Result<(ParamId, f64), CliError> {
    let (k, v) = item
        .split_once('=')
        .ok_or_else(|| CliError::usage(format!("expected NAME=VALUE, got `{item}`")))?;
    let id = ParamId::from_name(k.trim()).ok_or_else(|| CliError::usage(format!("unknown parameter `{}`", k.trim())))?;
    let v = v.trim().parse::<f64>().map_err(|_| CliError::usage(format!("invalid number in `{item}`")))?;
    Ok((id, v))
}

pub fn params(a: ParamsArgs) -> Result<(), CliError> {
    let mut p = match &a.from {
        Some(path) => input(VehicleParams::load(path))?,
        None => VehicleParams::default(),
    };
    for item in &a.set {
        let (id, v) = name_value(item)?;
        p.set(id, v);
    }
    for item in &a.scale {
        let (id, k) = name_value(item)?;
        p.set(id, p.get(id) * k);
    }
    p.validate()?;
    p.save(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn synth_log(a: SynthArgs) -> Result<(), CliError> {
    let p = match &a.params {
        Some(path) => input(VehicleParams::load(path))?,
        None => VehicleParams::default(),
    };
    if !(a.duration > 0.0) {
        return Err(CliError::usage("--duration must be positive"));
    }
    let opts = SynthOptions {
        duration: a.duration,
        seed: resolve_seed(a.seed, 0)?,
        ..SynthOptions::default()
    };
    let log = sysid::synthesize_log(&p, &opts)?;
    log.save(&a.out)?;
    println!("wrote {} ({} samples)", a.out.display(), log.len());
    Ok(())
}

pub fn sysid(a: SysidArgs, threads: Option<usize>) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => input(SysIdConfig::load(p))?,
        None => SysIdConfig::default(),
    };
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(lr) = a.lr {
        config.learning_rate = lr;
        config.learning_rate_end = config.learning_rate_end.min(lr);
    }
    if let Some(g) = &a.gradient {
        config.gradient_mode = g.parse()?;
    }
    if let Some(f) = &a.fit {
        config.fit_params = sysid::parse_param_list(f)?;
    }
    config.seed = resolve_seed(a.seed, config.seed)?;
    if threads == Some(1) {
        config.parallel = false;
    }
    config.validate()?;
    let init = match &a.init {
        Some(p) => input(VehicleParams::load(p))?,
        None => VehicleParams::default(),
    };
    let log = input(sysid::ingest_log(&a.log))?;

    RunManifest::new("sysid", config.seed, threads)
        .config("sysid", config.to_text())
        .config("init", init.to_text())
        .input(Some(&a.log))?
        .input(a.init.as_deref())?
        .input(a.config.as_deref())?
        .outputs(&a.out, &["params.txt", "loss.csv"])
        .write(&a.out)?;

    let segments = sysid::prepare_segments(&log, &config)?;
    let r = sysid::fit(&segments, &init, &config)?;
    r.params.save(&a.out.join("params.txt"))?;
    write_file(&a.out.join("loss.csv"), &r.history_csv())?;
    println!(
        "{} segments, loss {:.3e} -> {:.3e} (best epoch {})",
        segments.len(),
        r.history[0],
        r.history[r.best_epoch],
        r.best_epoch
    );
    for &id in &config.fit_params {
        println!("  {} = {:.6}", id.name(), r.params.get(id));
    }
    Ok(())
}

pub fn train(a: TrainArgs, threads: Option<usize>) -> Result<(), CliError> {
    let setup = env_setup(&a.env)?;
    let mut ppo = if a.desk { PpoConfig::desk() } else { PpoConfig::default() };
    if let Some(p) = &a.ppo_config {
        let kv = input(KvFile::read(p))?;
        ppo.apply_kv(&kv)?;
    }
    ppo.apply_kv(&overrides(&a.ppo_set)?)?;
    if let Some(s) = a.steps {
        ppo.total_steps = s;
    }
    ppo.seed = resolve_seed(a.seed, ppo.seed)?;
    ppo.validate()?;
    let obs_dim = setup.config.obs_dim();
    let resume = match &a.resume {
        Some(p) => Some(load_checkpoint(p, obs_dim)?),
        None => None,
    };

    let out = &a.out;
    RunManifest::new("train", ppo.seed, threads)
        .config("env", setup.config.to_text())
        .config("ppo", ppo.to_text())
        .input(a.env.env_config.as_deref())?
        .input(a.ppo_config.as_deref())?
        .input(setup.track_path.as_deref())?
        .input(setup.params_path.as_deref())?
        .input(a.resume.as_deref())?
        .outputs(out, &["env.cfg", "ppo.cfg", "latest.ckpt", "final.ckpt", "train_log.csv"])
        .write(out)?;
    write_file(&out.join("env.cfg"), &setup.config.to_text())?;
    write_file(&out.join("ppo.cfg"), &ppo.to_text())?;

    let quiet = a.quiet;
    let outcome = trainer::train_from(setup.track, setup.params, &setup.config, &ppo, Some(out), resume, |row| {
        if !quiet {
            println!(
                "update {:>5}  steps {:>10}  progress {:>9.3}  reward {:>8.4}  clip {:.3}",
                row.update, row.env_steps, row.mean_ep_progress, row.mean_reward, row.clip_frac
            );
        }
    })?;
    match outcome.log.last() {
        Some(r) => println!("done: {} env steps, mean episodic progress {:.3} m", r.env_steps, r.mean_ep_progress),
        None => println!("done: no updates within the step budget; wrote the initial checkpoint"),
    }
    Ok(())
}

fn load_checkpoint(path: &Path, obs_dim: usize) -> Result<Checkpoint, CliError> {
    input(Checkpoint::load(path, Some(obs_dim))).map_err(|e| match e.code {
        2 => e,
        _ => CliError::runtime(format!(
            "{}: {} (the environment config yields {obs_dim} observation elements; use the env.cfg written next to the checkpoint)",
            path.display(),
            e.message
        )),
    })
}

pub fn eval(a: EvalArgs, threads: Option<usize>) -> Result<(), CliError> {
    if a.laps == 0 {
        return Err(CliError::usage("--laps must be at least 1"));
    }
    let mut setup = env_setup(&a.env)?;
    if !a.keep_randomization {
        setup.config.randomization.sigma_dr = 0.0;
    }
    let seed = resolve_seed(a.seed, 0)?;
    let mut controller: Box<dyn Controller> = match &a.checkpoint {
        Some(p) => Box::new(PolicyController { policy: load_checkpoint(p, setup.config.obs_dim())?.policy }),
        None => Box::new(PurePursuit::default()),
    };

    RunManifest::new("eval", seed, threads)
        .config("env", setup.config.to_text())
        .config("eval", format!("laps = {}\ncontroller = {}\n", a.laps, if a.baseline { "baseline" } else { "policy" }))
        .input(a.env.env_config.as_deref())?
        .input(setup.track_path.as_deref())?
        .input(setup.params_path.as_deref())?
        .input(a.checkpoint.as_deref())?
        .outputs(&a.out, &["trajectory.csv", "report.json", "velocity_profile.csv"])
        .write(&a.out)?;

    let mut env = RacingEnv::new(setup.track.clone(), setup.params, setup.config, seed)?;
    let traj = run_eval(controller.as_mut(), &mut env, a.laps)?;
    let report = EvalReport::from_log(&traj, &setup.track);
    export_report(&traj, &report, &setup.track, &a.out)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |t| format!("{t:.3} s"));
    println!(
        "laps {} (clean {}), fastest clean {}, mean {}, E_off {:.4} m·s, crash rate {:.3}",
        report.lap_count,
        report.clean_lap_count,
        fmt(report.fastest_clean_lap),
        fmt(report.mean_lap),
        report.e_off,
        report.crash_rate
    );
    if report.lap_count < a.laps {
        eprintln!("warning: step limit reached after {} of {} laps", report.lap_count, a.laps);
    }
    Ok(())
}
