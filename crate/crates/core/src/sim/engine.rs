//! The discrete-event engine: slots, endpoints, energy, and the broker.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::capsule::{
    Codec, CodecConfig, Direction, ElisionContext, ExtendedResourceId, PayloadTransform,
    ResourceId, SegmentSlot, StatusRecord, StatusValue,
};
use crate::scheme::{Blueprint, Tweak};
use crate::tx::{self, ClaimRequest, Deposit, LayerIndex, SouthNotification, TxRegistry};

use super::event::{Event, EventKind, EventQueue, Message, MessageBody, TraceEvent};
use super::scenario::ScenarioConfig;
use super::topology::{
    advertised_latency, core_blueprint_for, freq_bounds, ColumnIndex, Grade, SlotAddress,
    StackTopology,
};
use super::SimError;

/// Integrates power over time for one core column. Callers advance to
/// `now` before changing the power level, so every interval is billed
/// at the level that was in force while it elapsed.
#[derive(Debug, Clone)]
struct EnergyLedger {
    total_j: f64,
    power_w: f64,
    last_t: f64,
}

impl EnergyLedger {
    fn new(power_w: f64) -> Self {
        EnergyLedger {
            total_j: 0.0,
            power_w,
            last_t: 0.0,
        }
    }

    fn advance(&mut self, now: f64) {
        self.total_j += self.power_w * (now - self.last_t);
        self.last_t = now;
    }

    fn set_power(&mut self, now: f64, power_w: f64) {
        self.advance(now);
        self.power_w = power_w;
    }
}

/// A core endpoint's protocol state. Replaced wholesale on rotation.
#[derive(Debug)]
struct CoreState {
    id: ResourceId,
    blueprint: Blueprint,
    freq: f64,
    /// Bumps on every transition start; stale completions are ignored.
    generation: u64,
    north_codec: Codec,
    north_enc_ctx: ElisionContext,
    south_codec: Option<Codec>,
    south_dec_ctx: ElisionContext,
    /// Session key handed out at deposit time, activated on notify.
    pending_north_key: Option<Vec<u8>>,
    established: bool,
}

impl CoreState {
    fn fresh(id: ResourceId, blueprint: Blueprint) -> Self {
        let f_max = blueprint
            .const_value("f_max")
            .expect("generated blueprint carries f_max");
        CoreState {
            id,
            blueprint,
            freq: f_max,
            generation: 0,
            north_codec: preest_codec(),
            north_enc_ctx: ElisionContext::new(),
            south_codec: None,
            south_dec_ctx: ElisionContext::new(),
            pending_north_key: None,
            established: false,
        }
    }

    /// Draw at frequency `f` and full load, evaluated from the core's
    /// own published blueprint — the ledger bills exactly what the
    /// blueprint promises.
    fn power_at(&self, f: f64) -> f64 {
        let l_max = self
            .blueprint
            .const_value("l_max")
            .expect("generated blueprint carries l_max");
        let mut bindings = BTreeMap::new();
        bindings.insert("f".to_string(), f);
        bindings.insert("l".to_string(), l_max);
        self.blueprint
            .evaluate("power", "draw", &bindings)
            .expect("generated power formula evaluates")
            .value
    }

    fn transition_delay(&self) -> f64 {
        advertised_latency(&self.blueprint).unwrap_or(0.0)
    }
}

/// The application's per-column pathway state.
#[derive(Debug)]
struct Pathway {
    north_codec: Codec,
    north_dec_ctx: ElisionContext,
    south_codec: Codec,
    south_enc_ctx: ElisionContext,
    delta: Option<f64>,
    freq_bounds: Option<(f64, f64)>,
}

fn preest_codec() -> Codec {
    Codec::default()
}

fn session_codec(key: &[u8]) -> Codec {
    Codec::new(CodecConfig {
        chain: vec![
            PayloadTransform::Compress,
            PayloadTransform::KeyedTransform(key.to_vec()),
        ],
        joint: false,
    })
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    /// `(call_id, value)` pairs in arrival order at the application.
    pub results: Vec<(u64, String)>,
    /// Capsule-opening attempts per component; relays must stay at 0.
    pub decode_counts: BTreeMap<String, u64>,
    /// Joules consumed by all cores inside the measurement window.
    pub measured_j: f64,
    pub cycle_len: f64,
    pub horizon: f64,
}

pub struct Simulation {
    config: ScenarioConfig,
    topo: StackTopology,
    now: f64,
    queue: EventQueue,
    slots: BTreeMap<SlotAddress, ResourceId>,
    directory: BTreeMap<ResourceId, LayerIndex>,
    wait: BTreeMap<SlotAddress, Vec<Message>>,
    spares: Vec<(ResourceId, Grade)>,
    cores: BTreeMap<ColumnIndex, CoreState>,
    pathways: BTreeMap<ColumnIndex, Pathway>,
    broker: TxRegistry,
    ledgers: BTreeMap<ColumnIndex, EnergyLedger>,
    decode_counts: BTreeMap<String, u64>,
    trace: Vec<TraceEvent>,
    results: Vec<(u64, String)>,
    rng: ChaCha8Rng,
    next_call_id: u64,
    measure_start_total: Option<f64>,
    measure_end_total: Option<f64>,
    cycle_len: f64,
    horizon: f64,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let topo = StackTopology {
            relay_layers: config.relay_layers,
            core_columns: config.core_columns,
        };
        let cycle_len = config.t_comp + config.t_comp / config.rho;
        let horizon = (config.warmup_cycles + config.measure_cycles) as f64 * cycle_len;

        let mut sim = Simulation {
            topo,
            now: 0.0,
            queue: EventQueue::default(),
            slots: BTreeMap::new(),
            directory: BTreeMap::new(),
            wait: BTreeMap::new(),
            spares: Vec::new(),
            cores: BTreeMap::new(),
            pathways: BTreeMap::new(),
            broker: TxRegistry::default(),
            ledgers: BTreeMap::new(),
            decode_counts: BTreeMap::new(),
            trace: Vec::new(),
            results: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            next_call_id: 0,
            measure_start_total: None,
            measure_end_total: None,
            cycle_len,
            horizon,
            config,
        };
        sim.install_stack();
        sim.schedule_initial();
        Ok(sim)
    }

    fn install_stack(&mut self) {
        let app_id = self.topo.app_id();
        self.slots.insert(self.topo.app_slot(), app_id.clone());
        self.directory.insert(app_id.clone(), self.topo.app_layer());
        self.decode_counts.insert(app_id.to_string(), 0);

        for layer in 1..=self.config.relay_layers {
            let id = self.topo.relay_id(layer);
            self.slots.insert(SlotAddress::new(layer, 0), id.clone());
            self.directory.insert(id.clone(), layer);
            self.decode_counts.insert(id.to_string(), 0);
        }

        for column in 0..self.config.core_columns {
            let id = self.topo.core_id(column);
            let grade = self.config.grade_of(column);
            let blueprint = core_blueprint_for(&self.config.params, self.config.delta, grade);
            let core = CoreState::fresh(id.clone(), blueprint);
            let full = core.power_at(core.freq);
            self.slots.insert(self.topo.core_slot(column), id.clone());
            self.directory.insert(id.clone(), 0);
            self.decode_counts.insert(id.to_string(), 0);
            self.ledgers.insert(column, EnergyLedger::new(full));
            self.cores.insert(column, core);
        }

        for (i, grade) in self.config.spare_cores.iter().enumerate() {
            self.spares.push((self.topo.spare_id(i), *grade));
        }
    }

    fn schedule_initial(&mut self) {
        if self.config.nsvtp_enabled {
            for column in 0..self.config.core_columns {
                self.queue.push(0.0, EventKind::Establish { column });
            }
        }
        for column in 0..self.config.core_columns {
            self.queue.push(0.0, EventKind::BeginCycle { column, k: 0 });
        }
        let failures = self.config.failures.clone();
        for f in failures {
            self.queue.push(f.at, EventKind::Fail { column: f.column });
        }
        self.queue.push(
            self.config.warmup_cycles as f64 * self.cycle_len,
            EventKind::MeasureStart,
        );
        self.queue.push(self.horizon, EventKind::MeasureEnd);
    }

    pub fn run(mut self) -> RunOutput {
        while let Some(Event { at, kind, .. }) = self.queue.pop() {
            if at > self.horizon {
                continue;
            }
            self.now = at;
            self.handle(kind);
        }
        RunOutput {
            trace: self.trace,
            results: self.results,
            decode_counts: self.decode_counts,
            measured_j: match (self.measure_start_total, self.measure_end_total) {
                (Some(start), Some(end)) => end - start,
                _ => 0.0,
            },
            cycle_len: self.cycle_len,
            horizon: self.horizon,
        }
    }

    fn handle(&mut self, kind: EventKind) {
        match kind {
            EventKind::Establish { column } => self.handle_establish(column),
            EventKind::BeginCycle { column, k } => self.handle_begin_cycle(column, k),
            EventKind::SendTweak { column, up } => self.handle_send_tweak(column, up),
            EventKind::Deliver { slot, message } => self.handle_deliver(slot, message),
            EventKind::ComputeDone {
                column,
                call_id,
                payload,
            } => self.handle_compute_done(column, call_id, &payload),
            EventKind::FreqChangeDone {
                column,
                generation,
                target,
            } => self.handle_freq_change_done(column, generation, target),
            EventKind::NotifySouth {
                column,
                notification,
            } => self.handle_notify_south(column, notification),
            EventKind::Fail { column } => self.handle_fail(column),
            EventKind::Rotate { column } => self.handle_rotate(column),
            EventKind::MeasureStart => {
                let total = self.total_core_energy();
                self.measure_start_total = Some(total);
            }
            EventKind::MeasureEnd => {
                let total = self.total_core_energy();
                self.measure_end_total = Some(total);
            }
        }
    }

    fn total_core_energy(&mut self) -> f64 {
        let now = self.now;
        let mut total = 0.0;
        for ledger in self.ledgers.values_mut() {
            ledger.advance(now);
            total += ledger.total_j;
        }
        total
    }

    fn push_trace(&mut self, kind: &str, who: &str, detail: serde_json::Value) {
        self.trace.push(TraceEvent {
            t: self.now,
            kind: kind.to_string(),
            who: who.to_string(),
            detail,
        });
    }

    fn fresh_key(&mut self) -> Vec<u8> {
        let mut key = [0u8; 16];
        self.rng.fill_bytes(&mut key);
        key.to_vec()
    }

    fn send(&mut self, from: SlotAddress, message: Message) {
        let next = match message.direction {
            Direction::Southwise => self.topo.next_south(from, message.column),
            Direction::Northwise => self.topo.next_north(from),
        };
        if let Some(slot) = next {
            self.queue.push(
                self.now + self.config.hop_latency,
                EventKind::Deliver { slot, message },
            );
        }
    }

    // --- pathway establishment -------------------------------------

    fn handle_establish(&mut self, column: ColumnIndex) {
        let Some(core) = self.cores.get_mut(&column) else {
            return; // slot is dark; the replacement will re-establish
        };
        let core_id = core.id.clone();
        let blueprint_text = core.blueprint.to_canonical_text();

        let relay_key = self.fresh_key();
        let north_key = self.fresh_key();

        // The blueprint capsule travels out of band inside the sealed
        // offer; fresh contexts on both ends, pre-session transforms.
        let bp_capsule = preest_codec()
            .northwise(
                Some(SegmentSlot::Present(blueprint_text.into_bytes())),
                None,
            )
            .expect("blueprint capsule is well-formed");
        let bp_xid = preest_codec()
            .encode_extended_id(
                &ExtendedResourceId {
                    id: core_id.clone(),
                    capsule: Some(bp_capsule),
                },
                &ElisionContext::new(),
            )
            .expect("blueprint capsule encodes");
        let sealed =
            tx::seal_offer(&relay_key, &north_key, bp_xid.as_bytes()).expect("offer seals");

        let target_layer = self.topo.app_layer();
        self.broker
            .deposit(
                self.now,
                Deposit {
                    relay_key: relay_key.clone(),
                    sealed,
                    target_layer,
                    depositor: core_id.clone(),
                },
            )
            .expect("fresh relay keys never collide");
        self.push_trace(
            "tx.deposit",
            core_id.as_str(),
            json!({ "column": column, "target_layer": target_layer }),
        );

        let core = self.cores.get_mut(&column).expect("checked above");
        core.pending_north_key = Some(north_key);

        // Float the relay key northwise as a plain status segment.
        let offer = tx::offer_status(&relay_key, target_layer)
            .to_canonical_json()
            .expect("offer fields are finite");
        // Offers always go out un-elided against a fresh context; both
        // ends reset their contexts when the pathway comes up anyway.
        let capsule = core
            .north_codec
            .northwise(None, Some(SegmentSlot::Present(offer.into_bytes())))
            .expect("offer capsule is well-formed");
        let xid = core
            .north_codec
            .encode_extended_id(
                &ExtendedResourceId {
                    id: core_id.clone(),
                    capsule: Some(capsule),
                },
                &ElisionContext::new(),
            )
            .expect("offer capsule encodes");

        self.push_trace(
            "nsvtp_message",
            core_id.as_str(),
            json!({ "direction": "north", "column": column, "kind": "offer" }),
        );
        self.send(
            self.topo.core_slot(column),
            Message {
                direction: Direction::Northwise,
                column,
                xid,
                body: MessageBody::Nsvtp,
            },
        );
    }

    fn handle_notify_south(&mut self, column: ColumnIndex, notification: SouthNotification) {
        self.push_trace(
            "tx.notify_south",
            "tx.broker",
            json!({ "column": column, "depositor": notification.depositor.as_str() }),
        );
        let Some(core) = self.cores.get_mut(&column) else {
            return;
        };
        if core.id != notification.depositor {
            // The depositor has been rotated out; the claim is moot.
            return;
        }
        let north_key = core
            .pending_north_key
            .take()
            .expect("notify follows this core's own deposit");
        core.north_codec = session_codec(&north_key);
        core.south_codec = Some(session_codec(&notification.south_key));
        core.north_enc_ctx = ElisionContext::new();
        core.south_dec_ctx = ElisionContext::new();
        core.established = true;
    }

    // --- the duty-cycled main workload ------------------------------

    fn handle_begin_cycle(&mut self, column: ColumnIndex, k: u64) {
        let t0 = k as f64 * self.cycle_len;
        let call_id = self.next_call_id;
        self.next_call_id += 1;
        let payload = format!("job-c{column}-{k:05}");
        let app_id = self.topo.app_id();

        self.push_trace(
            "main_call",
            app_id.as_str(),
            json!({ "call_id": call_id, "column": column, "cycle": k, "payload": payload }),
        );
        self.send(
            self.topo.app_slot(),
            Message {
                direction: Direction::Southwise,
                column,
                xid: app_id.to_string(),
                body: MessageBody::MainCall { call_id, payload },
            },
        );

        if self.config.nsvtp_enabled {
            // Tweaks are timed so they LAND at the effect instant; the
            // targets and keys are resolved when each send fires.
            if let Some(pathway) = self.pathways.get(&column) {
                if let Some(delta) = pathway.delta {
                    let lead = self.topo.hops() as f64 * self.config.hop_latency;
                    let t_end = t0 + self.config.t_comp;
                    let t_idle = self.config.t_comp / self.config.rho;
                    let t_up = (t0 + self.config.t_comp + t_idle - delta).max(t_end + delta);
                    self.queue.push(
                        (t_end - lead).max(self.now),
                        EventKind::SendTweak { column, up: false },
                    );
                    self.queue.push(
                        (t_up - lead).max(self.now),
                        EventKind::SendTweak { column, up: true },
                    );
                }
            }
        }

        let next_start = (k + 1) as f64 * self.cycle_len;
        if next_start < self.horizon {
            self.queue
                .push(next_start, EventKind::BeginCycle { column, k: k + 1 });
        }
    }

    fn handle_send_tweak(&mut self, column: ColumnIndex, up: bool) {
        let Some(pathway) = self.pathways.get_mut(&column) else {
            return;
        };
        let (Some(delta), Some((f_lo, f_hi))) = (pathway.delta, pathway.freq_bounds) else {
            return;
        };
        let target = if up { f_hi } else { f_lo };
        let tweak = Tweak::new("dvfs", "set_freq")
            .bind("freq_step", target)
            .bind("latency", delta);
        let body = tweak
            .to_canonical_json()
            .expect("tweak fields are finite")
            .into_bytes();
        let capsule = pathway
            .south_codec
            .southwise(None, vec![body])
            .expect("tweak capsule is well-formed");
        let app_id = self.topo.app_id();
        let xid = pathway
            .south_codec
            .encode_extended_id(
                &ExtendedResourceId {
                    id: app_id.clone(),
                    capsule: Some(capsule.clone()),
                },
                &pathway.south_enc_ctx,
            )
            .expect("tweak capsule encodes");
        pathway.south_enc_ctx.absorb(&capsule);

        self.push_trace(
            "nsvtp_message",
            app_id.as_str(),
            json!({
                "direction": "south",
                "column": column,
                "kind": "tweak",
                "up": up,
                "target": target
            }),
        );
        self.send(
            self.topo.app_slot(),
            Message {
                direction: Direction::Southwise,
                column,
                xid,
                body: MessageBody::Nsvtp,
            },
        );
    }

    fn handle_compute_done(&mut self, column: ColumnIndex, call_id: u64, payload: &str) {
        let Some(core) = self.cores.get_mut(&column) else {
            return; // the core died mid-compute; the call is lost
        };
        let value = format!("{:016x}", fnv1a64(payload.as_bytes()));
        let core_id = core.id.clone();

        // Piggyback a status segment on the result once a pathway is
        // up; repeats elide away against the shared context.
        let xid = if core.established {
            let mut status = StatusRecord::new();
            status.set("f", StatusValue::Num(core.freq));
            let status_json = status
                .to_canonical_json()
                .expect("status fields are finite");
            let capsule = core
                .north_codec
                .northwise(None, Some(SegmentSlot::Present(status_json.into_bytes())))
                .expect("status capsule is well-formed");
            let xid = core
                .north_codec
                .encode_extended_id(
                    &ExtendedResourceId {
                        id: core_id.clone(),
                        capsule: Some(capsule.clone()),
                    },
                    &core.north_enc_ctx,
                )
                .expect("status capsule encodes");
            core.north_enc_ctx.absorb(&capsule);
            xid
        } else {
            core_id.to_string()
        };

        self.send(
            self.topo.core_slot(column),
            Message {
                direction: Direction::Northwise,
                column,
                xid,
                body: MessageBody::MainResult { call_id, value },
            },
        );
    }

    // --- frequency transitions --------------------------------------

    fn start_transition(&mut self, column: ColumnIndex, target: f64) {
        let Some(core) = self.cores.get_mut(&column) else {
            return;
        };
        core.generation += 1;
        let generation = core.generation;
        let from = core.freq;
        let delay = core.transition_delay();
        // A transition is billed at the higher-power endpoint for its
        // whole duration; the new steady level applies from completion.
        let during = core.power_at(from).max(core.power_at(target));
        let core_id = core.id.clone();
        if let Some(ledger) = self.ledgers.get_mut(&column) {
            ledger.set_power(self.now, during);
        }
        self.push_trace(
            "freq_change_start",
            core_id.as_str(),
            json!({ "column": column, "from": from, "to": target }),
        );
        self.queue.push(
            self.now + delay,
            EventKind::FreqChangeDone {
                column,
                generation,
                target,
            },
        );
    }

    fn handle_freq_change_done(&mut self, column: ColumnIndex, generation: u64, target: f64) {
        let Some(core) = self.cores.get_mut(&column) else {
            return;
        };
        if generation != core.generation {
            return; // superseded by a newer transition
        }
        core.freq = target;
        let level = core.power_at(target);
        let core_id = core.id.clone();
        if let Some(ledger) = self.ledgers.get_mut(&column) {
            ledger.set_power(self.now, level);
        }
        self.push_trace(
            "freq_change_done",
            core_id.as_str(),
            json!({ "column": column, "f": target }),
        );
    }

    // --- message movement -------------------------------------------

    fn handle_deliver(&mut self, slot: SlotAddress, message: Message) {
        let Some(occupant) = self.slots.get(&slot).cloned() else {
            self.wait.entry(slot).or_default().push(message);
            return;
        };
        if slot.layer == 0 {
            self.core_receive(slot.column, message);
        } else if slot.layer == self.topo.app_layer() {
            self.app_receive(message);
        } else {
            let direction = match message.direction {
                Direction::Southwise => "south",
                Direction::Northwise => "north",
            };
            let body = match &message.body {
                MessageBody::MainCall { .. } => "main_call",
                MessageBody::MainResult { .. } => "main_result",
                MessageBody::Nsvtp => "nsvtp",
            };
            self.push_trace(
                "relay_hop",
                occupant.as_str(),
                json!({
                    "layer": slot.layer,
                    "direction": direction,
                    "column": message.column,
                    "body": body,
                    "xid_fnv": format!("{:016x}", fnv1a64(message.xid.as_bytes())),
                    "xid_len": message.xid.len()
                }),
            );
            self.send(slot, message);
        }
    }

    fn core_receive(&mut self, column: ColumnIndex, message: Message) {
        match message.body {
            MessageBody::MainCall { call_id, payload } => {
                if message.xid.contains('#') {
                    self.core_open_capsule(column, &message.xid);
                }
                self.queue.push(
                    self.now + self.config.t_comp,
                    EventKind::ComputeDone {
                        column,
                        call_id,
                        payload,
                    },
                );
            }
            MessageBody::Nsvtp => self.core_open_capsule(column, &message.xid),
            MessageBody::MainResult { .. } => {}
        }
    }

    fn core_open_capsule(&mut self, column: ColumnIndex, xid: &str) {
        let Some(core) = self.cores.get_mut(&column) else {
            return;
        };
        let core_id = core.id.clone();
        let Some(codec) = core.south_codec.clone() else {
            self.push_trace(
                "nsvtp_reject",
                core_id.as_str(),
                json!({ "column": column, "reason": "no pathway is established" }),
            );
            return;
        };
        *self.decode_counts.entry(core_id.to_string()).or_insert(0) += 1;
        let decoded = codec.decode_extended_id(xid, &core.south_dec_ctx);
        let capsule = match decoded {
            Err(e) => {
                self.push_trace(
                    "nsvtp_reject",
                    core_id.as_str(),
                    json!({ "column": column, "reason": e.to_string() }),
                );
                return;
            }
            Ok(xr) => match xr.capsule {
                None => return,
                Some(c) => c,
            },
        };
        let core = self.cores.get_mut(&column).expect("still occupied");
        core.south_dec_ctx.absorb(&capsule);
        let blueprint = core.blueprint.clone();

        for raw in &capsule.tweaks {
            let parsed = std::str::from_utf8(raw)
                .map_err(|e| e.to_string())
                .and_then(|text| Tweak::from_json(text).map_err(|e| e.to_string()))
                .and_then(|tweak| blueprint.validate_tweak(&tweak).map_err(|e| e.to_string()))
                .and_then(|validated| validated.apply(&blueprint).map_err(|e| e.to_string()));
            match parsed {
                Err(reason) => {
                    self.push_trace(
                        "nsvtp_reject",
                        core_id.as_str(),
                        json!({ "column": column, "reason": reason }),
                    );
                }
                Ok(eval) => {
                    if eval.outcome == "target_freq" {
                        self.start_transition(column, eval.value);
                    }
                }
            }
        }
    }

    fn app_receive(&mut self, message: Message) {
        let column = message.column;
        match message.body {
            MessageBody::MainResult { call_id, value } => {
                self.results.push((call_id, value));
                let mut detail = json!({ "call_id": call_id, "column": column });
                if message.xid.contains('#') {
                    if let Some(capsule) = self.app_open_capsule(column, &message.xid) {
                        if let Some(SegmentSlot::Present(bytes)) = &capsule.status {
                            if let Ok(status) =
                                StatusRecord::from_json(std::str::from_utf8(bytes).unwrap_or(""))
                            {
                                if let Some(StatusValue::Num(f)) = status.get("f") {
                                    detail["status_f"] = json!(f);
                                }
                            }
                        }
                    }
                }
                let app = self.topo.app_id();
                self.push_trace("main_result", app.as_str(), detail);
            }
            MessageBody::Nsvtp => {
                if let Some(capsule) = self.app_open_capsule(column, &message.xid) {
                    if let Some(SegmentSlot::Present(bytes)) = &capsule.status {
                        if let Ok(status) =
                            StatusRecord::from_json(std::str::from_utf8(bytes).unwrap_or(""))
                        {
                            if let Some((relay_key, _layer)) = tx::parse_offer(&status) {
                                self.app_claim(column, relay_key);
                            }
                        }
                    }
                }
            }
            MessageBody::MainCall { .. } => {}
        }
    }

    /// Opens a northwise capsule at the application: the session codec
    /// first if a pathway is up, falling back to the pre-establishment
    /// transforms so (re-)establishment offers always get through.
    fn app_open_capsule(
        &mut self,
        column: ColumnIndex,
        xid: &str,
    ) -> Option<crate::capsule::Capsule> {
        let app_key = self.topo.app_id().to_string();
        *self.decode_counts.entry(app_key.clone()).or_insert(0) += 1;

        if let Some(pathway) = self.pathways.get_mut(&column) {
            if let Ok(xr) = pathway
                .north_codec
                .decode_extended_id(xid, &pathway.north_dec_ctx)
            {
                if let Some(capsule) = xr.capsule {
                    pathway.north_dec_ctx.absorb(&capsule);
                    return Some(capsule);
                }
                return None;
            }
        }
        match preest_codec().decode_extended_id(xid, &ElisionContext::new()) {
            Ok(xr) => xr.capsule,
            Err(e) => {
                self.push_trace(
                    "nsvtp_reject",
                    &app_key,
                    json!({ "column": column, "reason": e.to_string() }),
                );
                None
            }
        }
    }

    fn app_claim(&mut self, column: ColumnIndex, relay_key: Vec<u8>) {
        let app_id = self.topo.app_id();
        let south_key = self.fresh_key();
        let request = ClaimRequest {
            relay_key,
            requester: app_id.clone(),
            south_key,
        };
        let outcome = match self.broker.claim(self.now, &request, &self.directory) {
            Err(e) => {
                self.push_trace(
                    "nsvtp_reject",
                    app_id.as_str(),
                    json!({ "column": column, "stage": "claim", "reason": e.to_string() }),
                );
                return;
            }
            Ok(o) => o,
        };
        self.push_trace(
            "tx.claim",
            app_id.as_str(),
            json!({
                "column": column,
                "depositor": outcome.notification.depositor.as_str()
            }),
        );

        let blueprint = match self.open_deposited_blueprint(&outcome.capsule_bytes) {
            Err(reason) => {
                self.push_trace(
                    "nsvtp_reject",
                    app_id.as_str(),
                    json!({ "column": column, "stage": "blueprint", "reason": reason }),
                );
                return;
            }
            Ok(bp) => bp,
        };

        let delta = advertised_latency(&blueprint);
        let bounds = freq_bounds(&blueprint);
        self.pathways.insert(
            column,
            Pathway {
                north_codec: session_codec(&outcome.north_key),
                north_dec_ctx: ElisionContext::new(),
                south_codec: session_codec(&request.south_key),
                south_enc_ctx: ElisionContext::new(),
                delta,
                freq_bounds: bounds,
            },
        );
        self.push_trace(
            "pathway_established",
            app_id.as_str(),
            json!({
                "column": column,
                "blueprint_tag": blueprint.tag,
                "revision": blueprint.revision,
                "advertised_delta": delta
            }),
        );
        self.queue.push(
            self.now,
            EventKind::NotifySouth {
                column,
                notification: outcome.notification,
            },
        );
    }

    fn open_deposited_blueprint(&self, capsule_bytes: &[u8]) -> Result<Blueprint, String> {
        let text = std::str::from_utf8(capsule_bytes).map_err(|e| e.to_string())?;
        let xr = preest_codec()
            .decode_extended_id(text, &ElisionContext::new())
            .map_err(|e| e.to_string())?;
        let capsule = xr.capsule.ok_or("deposited id carries no capsule")?;
        let Some(SegmentSlot::Present(bytes)) = &capsule.blueprint else {
            return Err("deposited capsule carries no blueprint".to_string());
        };
        let source = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
        Blueprint::parse(source).map_err(|e| e.to_string())
    }

    // --- failure and rotation ---------------------------------------

    fn handle_fail(&mut self, column: ColumnIndex) {
        let slot = self.topo.core_slot(column);
        let Some(old_id) = self.slots.remove(&slot) else {
            return; // already dark
        };
        self.directory.remove(&old_id);
        self.cores.remove(&column);
        if let Some(ledger) = self.ledgers.get_mut(&column) {
            ledger.set_power(self.now, 0.0);
        }
        self.push_trace("failure", old_id.as_str(), json!({ "column": column }));
        self.queue.push(
            self.now + self.config.rotation_delay,
            EventKind::Rotate { column },
        );
    }

    fn handle_rotate(&mut self, column: ColumnIndex) {
        let wanted = self.config.grade_of(column);
        // A same-grade spare preserves the slot exactly; otherwise a
        // high-grade spare stands in, since its blueprint extends the
        // low one. A low-grade spare can never cover a high-grade slot.
        let position = self
            .spares
            .iter()
            .position(|(_, g)| *g == wanted)
            .or_else(|| self.spares.iter().position(|(_, g)| *g == Grade::High));
        let Some(position) = position else {
            self.push_trace(
                "rotation",
                "sim",
                json!({ "column": column, "installed": serde_json::Value::Null }),
            );
            return;
        };
        let (id, grade) = self.spares.remove(position);
        let blueprint = core_blueprint_for(&self.config.params, self.config.delta, grade);
        let core = CoreState::fresh(id.clone(), blueprint);
        let full = core.power_at(core.freq);

        let slot = self.topo.core_slot(column);
        self.slots.insert(slot, id.clone());
        self.directory.insert(id.clone(), 0);
        self.decode_counts.entry(id.to_string()).or_insert(0);
        self.cores.insert(column, core);
        if let Some(ledger) = self.ledgers.get_mut(&column) {
            ledger.set_power(self.now, full);
        }
        self.push_trace(
            "rotation",
            id.as_str(),
            json!({ "column": column, "installed": id.as_str(), "grade": grade.as_str() }),
        );

        // Waiting messages flow to the new occupant in arrival order.
        if let Some(parked) = self.wait.remove(&slot) {
            for message in parked {
                self.queue
                    .push(self.now, EventKind::Deliver { slot, message });
            }
        }
        if self.config.nsvtp_enabled {
            self.queue.push(self.now, EventKind::Establish { column });
        }
    }
}
