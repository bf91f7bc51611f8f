//! Library surface of the `nsvtp` binary, exposed so integration tests
//! can drive the subcommands in-process.
//!
//! Exit codes: 0 on success, 1 when a run is infeasible or a protocol
//! step is refused at runtime, 2 for unusable flags or config files.

pub mod config;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nsvtp_core::tx::{offer_status, parse_offer, seal_offer};
use nsvtp_core::{
    core_blueprint_for, log_spaced, render_trace_jsonl, run_energy_scenario, Blueprint,
    ClaimRequest, Codec, CodecConfig, Deposit, Direction, DvfsError, ElisionContext,
    ExtendedResourceId, Grade, LayerIndex, PayloadTransform, ResourceId, SegmentSlot, SimError,
    StatusRecord, TxRegistry,
};

use config::{parse_hex, ParamOverrides, ScenarioOverrides};

/// A command that could not complete: `code` is the process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    /// Unusable input: bad config file, malformed inline JSON.
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    /// Legitimate input that cannot run or is refused at runtime.
    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(format!("i/o error: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "nsvtp",
    version,
    about = "Visibility/transparency pathway toolkit: energy-ratio sweeps, a layered-stack \
             simulator, the capsule codec, and a broker walkthrough"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep the energy ratio over a grid of duty-cycle shapes, as CSV
    Sweep(SweepArgs),
    /// Run the layered-stack simulation and report measured vs predicted energy
    Simulate(SimulateArgs),
    /// Encode or decode capsule-extended resource identifiers
    Capsule(CapsuleArgs),
    /// Walk through one brokered pathway establishment, step by step
    TxDemo(TxDemoArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON file with model parameters (all fields optional)
    #[arg(long, value_name = "FILE")]
    pub params_file: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamOverrides,
    /// Smallest compute-to-idle ratio on the grid
    #[arg(long, default_value_t = 0.01)]
    pub rho_min: f64,
    /// Largest compute-to-idle ratio on the grid
    #[arg(long, default_value_t = 10.0)]
    pub rho_max: f64,
    /// Number of log-spaced rho samples
    #[arg(long, default_value_t = 25)]
    pub rho_steps: usize,
    /// Smallest t_comp/delta ratio on the grid
    #[arg(long, default_value_t = 10.0)]
    pub ratio_min: f64,
    /// Largest t_comp/delta ratio on the grid
    #[arg(long, default_value_t = 1000.0)]
    pub ratio_max: f64,
    /// Number of log-spaced t_comp/delta samples
    #[arg(long, default_value_t = 25)]
    pub ratio_steps: usize,
    /// Write the CSV here instead of stdout
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON scenario file (all fields optional)
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: ScenarioOverrides,
    /// Write the event trace here as JSON lines
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CapsuleArgs {
    #[command(subcommand)]
    pub action: CapsuleAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WireDirection {
    /// Toward the application: blueprint and/or status
    North,
    /// Toward the hardware: status and/or tweaks
    South,
}

#[derive(Debug, Args)]
pub struct TransformFlags {
    /// Skip the compression transform
    #[arg(long)]
    pub no_compress: bool,
    /// Keyed transform key, as hex
    #[arg(long, value_parser = parse_hex, value_name = "HEX")]
    pub key: Option<std::vec::Vec<u8>>,
    /// Apply the transform chain to the whole segment stream at once
    #[arg(long)]
    pub joint: bool,
}

impl TransformFlags {
    fn codec(&self) -> Codec {
        let mut chain = Vec::new();
        if !self.no_compress {
            chain.push(PayloadTransform::Compress);
        }
        if let Some(key) = &self.key {
            chain.push(PayloadTransform::KeyedTransform(key.clone()));
        }
        Codec::new(CodecConfig {
            chain,
            joint: self.joint,
        })
    }
}

#[derive(Debug, Subcommand)]
pub enum CapsuleAction {
    /// Build an extended identifier from segments given as flags
    Encode {
        /// Bare resource identifier to extend
        #[arg(long)]
        id: String,
        /// Which way the capsule travels
        #[arg(long, value_enum)]
        direction: WireDirection,
        /// Blueprint file to carry (northwise only); validated by parsing
        #[arg(long, value_name = "FILE")]
        blueprint: Option<PathBuf>,
        /// Status record to carry, as inline JSON (e.g. '{"f": 2.5}')
        #[arg(long, value_name = "JSON")]
        status: Option<String>,
        /// Tweak to carry, as inline JSON (southwise only; repeatable)
        #[arg(long = "tweak", value_name = "JSON")]
        tweaks: Vec<String>,
        #[command(flatten)]
        transforms: TransformFlags,
    },
    /// Parse an extended identifier and describe what it carries
    Decode {
        /// The extended identifier text
        xid: String,
        #[command(flatten)]
        transforms: TransformFlags,
    },
}

#[derive(Debug, Args)]
pub struct TxDemoArgs {
    /// Offer lifetime at the broker, in seconds
    #[arg(long, default_value_t = nsvtp_core::tx::DEFAULT_TTL)]
    pub ttl: f64,
    /// Layer the depositor addresses the offer to
    #[arg(long, default_value_t = 3)]
    pub target_layer: LayerIndex,
    /// Let the claimant sit on the wrong layer (the claim is refused)
    #[arg(long)]
    pub wrong_layer: bool,
    /// Claim only after the offer has expired (the claim is refused)
    #[arg(long)]
    pub late: bool,
    /// Corrupt one bit of the sealed blob in transit (the claim is refused)
    #[arg(long)]
    pub tamper: bool,
    /// Skip the broker and hand the blueprint over directly
    #[arg(long)]
    pub direct: bool,
}

/// Parses real process arguments, runs, prints errors, returns the
/// process exit code.
pub fn run(cli: Cli) -> i32 {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(cli, &mut out) {
        Ok(()) => 0,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

/// Runs one parsed command, writing its report to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Sweep(args) => sweep(args, out),
        Command::Simulate(args) => simulate(args, out),
        Command::Capsule(args) => match args.action {
            CapsuleAction::Encode {
                id,
                direction,
                blueprint,
                status,
                tweaks,
                transforms,
            } => capsule_encode(id, direction, blueprint, status, tweaks, transforms, out),
            CapsuleAction::Decode { xid, transforms } => capsule_decode(&xid, transforms, out),
        },
        Command::TxDemo(args) => tx_demo(args, out),
    }
}

fn model_failure(e: DvfsError) -> Failure {
    match e {
        DvfsError::InfeasibleTweakWindow { .. } => Failure::runtime(e.to_string()),
        other => Failure::config(other.to_string()),
    }
}

fn sweep(args: SweepArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut params = config::load_params(args.params_file.as_deref())?;
    args.params.apply(&mut params);

    let rho_axis = log_spaced(args.rho_min, args.rho_max, args.rho_steps).map_err(model_failure)?;
    let ratio_axis =
        log_spaced(args.ratio_min, args.ratio_max, args.ratio_steps).map_err(model_failure)?;
    let grid = params
        .sweep_eta(&rho_axis, &ratio_axis)
        .map_err(model_failure)?;

    let csv = grid.to_csv();
    match &args.out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?,
        None => out.write_all(csv.as_bytes())?,
    }

    match (grid.min_feasible(), grid.max_feasible()) {
        (Some(min), Some(max)) => {
            eprintln!(
                "{} of {} cells feasible; eta in [{:.6}, {:.6}], minimum at rho={:.4}, t_comp/delta={:.1}",
                grid.feasible_count(),
                grid.rho.len() * grid.tcomp_over_delta.len(),
                min.eta,
                max.eta,
                min.rho,
                min.tcomp_over_delta,
            );
            Ok(())
        }
        _ => Err(Failure::runtime(
            "no feasible cells on this grid: every idle window is too short for two transitions",
        )),
    }
}

fn simulate(args: SimulateArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let mut scenario = config::load_scenario(args.config.as_deref())?;
    args.overrides.apply(&mut scenario);

    let (report, run) = run_energy_scenario(scenario).map_err(|e| match e {
        SimError::Model(inner) => model_failure(inner),
        SimError::InvalidScenario(msg) => Failure::config(msg),
    })?;

    if let Some(path) = &args.trace {
        std::fs::write(path, render_trace_jsonl(&run.trace))
            .map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))?;
    }

    let json = serde_json::to_string(&report)
        .map_err(|e| Failure::runtime(format!("cannot serialize report: {e}")))?;
    writeln!(out, "{json}")?;
    Ok(())
}

fn capsule_encode(
    id: String,
    direction: WireDirection,
    blueprint: Option<PathBuf>,
    status: Option<String>,
    tweaks: Vec<String>,
    transforms: TransformFlags,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let id = ResourceId::new(id).map_err(|e| Failure::config(e.to_string()))?;
    let codec = transforms.codec();

    let blueprint_bytes = match &blueprint {
        None => None,
        Some(path) => {
            let text = config::read_file(path)?;
            let parsed = Blueprint::parse(&text)
                .map_err(|e| Failure::config(format!("bad blueprint {}: {e}", path.display())))?;
            Some(parsed.to_canonical_text().into_bytes())
        }
    };
    let status_bytes = match &status {
        None => None,
        Some(text) => {
            let record = StatusRecord::from_json(text)
                .map_err(|e| Failure::config(format!("bad status JSON: {e}")))?;
            Some(
                record
                    .to_canonical_json()
                    .map_err(|e| Failure::config(e.to_string()))?
                    .into_bytes(),
            )
        }
    };
    let tweak_bytes: Vec<Vec<u8>> = tweaks
        .iter()
        .map(|text| {
            let tweak = nsvtp_core::Tweak::from_json(text)
                .map_err(|e| Failure::config(format!("bad tweak JSON: {e}")))?;
            Ok(tweak
                .to_canonical_json()
                .map_err(|e| Failure::config(e.to_string()))?
                .into_bytes())
        })
        .collect::<Result<_, Failure>>()?;

    let capsule = match direction {
        WireDirection::North => {
            if !tweak_bytes.is_empty() {
                return Err(Failure::config(
                    "northwise capsules carry no tweaks; drop --tweak or use --direction south",
                ));
            }
            codec.northwise(
                blueprint_bytes.map(SegmentSlot::Present),
                status_bytes.map(SegmentSlot::Present),
            )
        }
        WireDirection::South => {
            if blueprint_bytes.is_some() {
                return Err(Failure::config(
                    "southwise capsules carry no blueprint; drop --blueprint or use --direction north",
                ));
            }
            codec.southwise(status_bytes.map(SegmentSlot::Present), tweak_bytes)
        }
    }
    .map_err(|e| Failure::config(e.to_string()))?;

    let xid = ExtendedResourceId {
        id,
        capsule: Some(capsule),
    };
    let wire = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .map_err(|e| Failure::runtime(e.to_string()))?;
    writeln!(out, "{wire}")?;
    Ok(())
}

fn capsule_decode(
    xid_text: &str,
    transforms: TransformFlags,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let codec = transforms.codec();
    let xid = codec
        .decode_extended_id(xid_text, &ElisionContext::new())
        .map_err(|e| Failure::runtime(format!("cannot decode: {e}")))?;

    writeln!(out, "id: {}", xid.id)?;
    let capsule = match xid.capsule {
        None => {
            writeln!(out, "no capsule")?;
            return Ok(());
        }
        Some(c) => c,
    };
    let direction = match capsule.direction() {
        Direction::Northwise => "northwise",
        Direction::Southwise => "southwise",
    };
    writeln!(out, "direction: {direction}")?;

    if let Some(slot) = &capsule.blueprint {
        let bytes = slot.present().unwrap_or_default();
        match std::str::from_utf8(bytes)
            .ok()
            .and_then(|t| Blueprint::parse(t).ok())
        {
            Some(bp) => writeln!(
                out,
                "blueprint: {} bytes (tag \"{}\" revision {})",
                bytes.len(),
                bp.tag,
                bp.revision
            )?,
            None => writeln!(out, "blueprint: {} bytes (unparsed)", bytes.len())?,
        }
    }
    if let Some(slot) = &capsule.status {
        let bytes = slot.present().unwrap_or_default();
        match std::str::from_utf8(bytes) {
            Ok(text) => writeln!(out, "status: {text}")?,
            Err(_) => writeln!(out, "status: {} bytes (not UTF-8)", bytes.len())?,
        }
    }
    if !capsule.tweaks.is_empty() {
        writeln!(out, "tweaks: {}", capsule.tweaks.len())?;
        for (i, tweak) in capsule.tweaks.iter().enumerate() {
            match std::str::from_utf8(tweak) {
                Ok(text) => writeln!(out, "  tweak[{i}]: {text}")?,
                Err(_) => writeln!(out, "  tweak[{i}]: {} bytes (not UTF-8)", tweak.len())?,
            }
        }
    }
    Ok(())
}

fn tx_demo(args: TxDemoArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let params = nsvtp_core::DvfsModelParams::default();
    let blueprint = core_blueprint_for(&params, 0.02, Grade::High);
    let blueprint_bytes = blueprint.to_canonical_text().into_bytes();
    let south = ResourceId::new("cpu.core0").expect("static id");
    let app = ResourceId::new("app.main").expect("static id");

    writeln!(
        out,
        "1. {} publishes blueprint \"{}\" revision {} ({} bytes canonical)",
        south,
        blueprint.tag,
        blueprint.revision,
        blueprint_bytes.len()
    )?;

    if args.direct {
        // No broker: the blueprint rides an extended id straight up.
        let codec = Codec::default();
        let capsule = codec
            .northwise(Some(SegmentSlot::Present(blueprint_bytes)), None)
            .map_err(|e| Failure::runtime(e.to_string()))?;
        let xid = ExtendedResourceId {
            id: south.clone(),
            capsule: Some(capsule),
        };
        let wire = codec
            .encode_extended_id(&xid, &ElisionContext::new())
            .map_err(|e| Failure::runtime(e.to_string()))?;
        writeln!(
            out,
            "2. direct handoff, no broker: extended id is {} chars",
            wire.len()
        )?;
        let back = codec
            .decode_extended_id(&wire, &ElisionContext::new())
            .map_err(|e| Failure::runtime(e.to_string()))?;
        let opened = back
            .capsule
            .and_then(|c| c.blueprint)
            .and_then(|s| s.present().map(<[u8]>::to_vec))
            .ok_or_else(|| Failure::runtime("blueprint segment missing after decode"))?;
        let reparsed = Blueprint::parse(std::str::from_utf8(&opened).unwrap_or_default())
            .map_err(|e| Failure::runtime(format!("returned blueprint does not parse: {e}")))?;
        writeln!(
            out,
            "3. {} reads blueprint \"{}\" revision {} — no key exchange, no claim control",
            app, reparsed.tag, reparsed.revision
        )?;
        return Ok(());
    }

    let relay_key = b"demo-relay-key".to_vec();
    let north_key = b"demo-north-session-key".to_vec();
    let south_key = b"demo-south-session-key".to_vec();

    let mut sealed = seal_offer(&relay_key, &north_key, &blueprint_bytes)
        .map_err(|e| Failure::runtime(e.to_string()))?;
    writeln!(
        out,
        "2. {} seals its session key and blueprint under the relay key ({} bytes sealed)",
        south,
        sealed.len()
    )?;
    if args.tamper {
        let mid = sealed.len() / 2;
        sealed[mid] ^= 0x01;
        writeln!(out, "   (one bit of the sealed blob flips in transit)")?;
    }

    let registry = TxRegistry::new(args.ttl);
    registry
        .deposit(
            0.0,
            Deposit {
                relay_key: relay_key.clone(),
                sealed,
                target_layer: args.target_layer,
                depositor: south.clone(),
            },
        )
        .map_err(|e| Failure::runtime(e.to_string()))?;
    writeln!(
        out,
        "3. deposited with the broker at t=0 (ttl {}s, addressed to layer {})",
        args.ttl, args.target_layer
    )?;

    // The offer itself travels north as an ordinary status segment.
    let codec = Codec::default();
    let offer = offer_status(&relay_key, args.target_layer);
    let capsule = codec
        .northwise(
            None,
            Some(SegmentSlot::Present(
                offer
                    .to_canonical_json()
                    .map_err(|e| Failure::runtime(e.to_string()))?
                    .into_bytes(),
            )),
        )
        .map_err(|e| Failure::runtime(e.to_string()))?;
    let xid = ExtendedResourceId {
        id: south.clone(),
        capsule: Some(capsule),
    };
    let wire = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .map_err(|e| Failure::runtime(e.to_string()))?;
    writeln!(out, "4. offer floats northwise on the name: {wire}")?;

    let decoded = codec
        .decode_extended_id(&wire, &ElisionContext::new())
        .map_err(|e| Failure::runtime(e.to_string()))?;
    let status_bytes = decoded
        .capsule
        .and_then(|c| c.status)
        .and_then(|s| s.present().map(<[u8]>::to_vec))
        .ok_or_else(|| Failure::runtime("offer status missing after decode"))?;
    let record = StatusRecord::from_json(std::str::from_utf8(&status_bytes).unwrap_or_default())
        .map_err(|e| Failure::runtime(e.to_string()))?;
    let (found_key, found_layer) = parse_offer(&record)
        .ok_or_else(|| Failure::runtime("status segment does not carry an offer"))?;
    writeln!(
        out,
        "5. {} spots the offer at the top of the stack (layer {})",
        app, found_layer
    )?;

    let mut directory: BTreeMap<ResourceId, LayerIndex> = BTreeMap::new();
    let app_layer = if args.wrong_layer {
        args.target_layer + 1
    } else {
        args.target_layer
    };
    directory.insert(app.clone(), app_layer);
    let claim_at = if args.late { args.ttl * 2.0 + 1.0 } else { 1.0 };

    let outcome = registry
        .claim(
            claim_at,
            &ClaimRequest {
                relay_key: found_key,
                requester: app.clone(),
                south_key: south_key.clone(),
            },
            &directory,
        )
        .map_err(|e| Failure::runtime(format!("claim refused: {e}")))?;

    let claimed = Blueprint::parse(std::str::from_utf8(&outcome.capsule_bytes).unwrap_or_default())
        .map_err(|e| Failure::runtime(format!("claimed blueprint does not parse: {e}")))?;
    writeln!(
        out,
        "6. claim at t={} accepted: north session key ({} bytes) and blueprint \"{}\" revision {}",
        claim_at,
        outcome.north_key.len(),
        claimed.tag,
        claimed.revision
    )?;
    writeln!(
        out,
        "7. broker notifies {} with the claimant's south session key ({} bytes); the pathway is live",
        outcome.notification.depositor,
        outcome.notification.south_key.len()
    )?;
    Ok(())
}
