//! `reefseed fleet`: the fleetlink service plus N simulated vehicles.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::Args;
use reefseed::fleetlink::DEFAULT_PORT;
use reefseed::guidance::{formation_offsets, FormationShape, FormationSpec, MAX_FLEET};
use reefseed::scenario::Simulation;
use reefseed_fleet::simvehicle::{run_sim_vehicle, SimVehicleConfig};
use reefseed_fleet::{serve, HubConfig, ServerConfig};

#[derive(Args)]
pub struct FleetArgs {
    /// Preset name or scenario file each vehicle runs.
    #[arg(long, default_value = "loomis-coverage")]
    scenario: String,
    /// Number of simulated vehicles (at most 7).
    #[arg(long, short = 'n', default_value_t = 3)]
    vehicles: usize,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    bind: std::net::IpAddr,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the simulation tick rate in Hz.
    #[arg(long)]
    tick_rate: Option<f64>,
    /// Simulated seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    speedup: f64,
    /// Lateral spacing of the line formation, meters.
    #[arg(long, default_value_t = 2.0)]
    spacing: f64,
    /// Dispatch the scenario mission in formation and start at once.
    #[arg(long)]
    autostart: bool,
    /// Seconds after which a silent vehicle is flagged stale.
    #[arg(long, default_value_t = 5.0)]
    stale_timeout: f64,
    /// Directory with the console bundle, served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Stop after this many wall-clock seconds instead of waiting for Ctrl-C.
    #[arg(long)]
    duration: Option<f64>,
}

pub fn run(args: FleetArgs) -> Result<()> {
    if args.vehicles == 0 || args.vehicles > MAX_FLEET {
        bail!("--vehicles must be between 1 and {MAX_FLEET}");
    }
    if !(args.speedup > 0.0 && args.speedup.is_finite()) {
        bail!("--speedup must be positive");
    }
    if !(args.stale_timeout > 0.0 && args.stale_timeout.is_finite()) {
        bail!("--stale-timeout must be positive");
    }
    let scenario = crate::load_scenario(&crate::ScenarioArgs {
        scenario: args.scenario.clone(),
        seed: args.seed,
        tick_rate: args.tick_rate,
    })?;
    tokio::runtime::Runtime::new()?.block_on(serve_fleet(args, scenario))
}

async fn serve_fleet(args: FleetArgs, scenario: reefseed::scenario::Scenario) -> Result<()> {
    let config = ServerConfig {
        bind: SocketAddr::new(args.bind, args.port),
        hub: HubConfig { stale_timeout: Duration::from_secs_f64(args.stale_timeout), ..Default::default() },
        static_dir: args.static_dir.clone(),
        ..Default::default()
    };
    let server = serve(config).await.with_context(|| format!("binding {}:{}", args.bind, args.port))?;
    let addr = SocketAddr::new([127, 0, 0, 1].into(), server.local_addr().port());
    println!("fleetlink on {} (console feed at ws://{}/feed)", server.local_addr(), server.local_addr());

    let base = Simulation::new(&scenario)?.mission().clone();
    let spec = FormationSpec { shape: FormationShape::Line, spacing: args.spacing, count: args.vehicles };
    let direction = base.initial_direction();
    let offsets = formation_offsets(&spec)?;
    let tick_period = Duration::from_secs_f64(scenario.dt() / args.speedup);

    let (stop_tx, stop_rx) = tokio::sync::watch::channel(false);
    let mut tasks = Vec::new();
    for (i, off) in offsets.iter().enumerate() {
        let config = SimVehicleConfig {
            vehicle_id: format!("asv-{}", i + 1),
            scenario: scenario.clone(),
            start_offset: off.to_world(direction),
            classifier_seed: Some(scenario.seed.wrapping_add(1000 + i as u64)),
            tick_period,
            autostart: false,
        };
        tasks.push(tokio::spawn(run_sim_vehicle(addr, config, stop_rx.clone())));
    }

    if args.autostart {
        let hub = server.hub().clone();
        tokio::time::timeout(Duration::from_secs(10), async {
            while hub.snapshot().await.map(|s| s.len()).unwrap_or(0) < args.vehicles {
                tokio::time::sleep(Duration::from_millis(20)).await;
            }
        })
        .await
        .context("simulated vehicles did not connect")?;
        let assigned = hub.dispatch(base, spec, true).await?;
        println!("dispatched {} vehicles in line formation", assigned.len());
    }

    match args.duration {
        Some(secs) => tokio::time::sleep(Duration::from_secs_f64(secs.max(0.0))).await,
        None => {
            tokio::signal::ctrl_c().await?;
        }
    }
    let _ = stop_tx.send(true);
    for task in tasks {
        match task.await? {
            Ok(r) => println!(
                "{}: {} ticks, {} telemetry frames, {} decisions, at ({:.1}, {:.1}), {:?}",
                r.vehicle_id, r.ticks, r.telemetry_sent, r.events, r.final_pose.x, r.final_pose.y, r.termination
            ),
            Err(e) => eprintln!("vehicle failed: {e}"),
        }
    }
    server.shutdown().await;
    Ok(())
}
