//! Experiment driver: wires the synthetic CAV world, the event scheduler,
//! the RSU consensus nodes (or the centralized store), and the assessment
//! pipeline into reproducible scenario runs, and builds the two headline
//! result tables (loss curves and the malicious-count accuracy sweep).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::assessment::{
    self, Architecture, AssessError, LabeledSequence, ModelParams, Store, Thresholds, TrainConfig,
    SEQ_LEN,
};
use crate::consensus::node::{timer_tag, ByzMode, Msg, NetContext, NodeMode, RsuNode,
    TIMER_ROUND_DEADLINE, TIMER_ROUND_START};
use crate::consensus::{elect_committee, RewardConfig, StakePool};
use crate::crypto::{digest, Canonical, Digest, PublicKey};
use crate::ledger::{AdmissionVerdict, CentralStore, Chain};
use crate::netsim::{
    Event, FaultAction, FaultScript, LinkModel, LogEntry, NodeId, Payload, Scheduler, US_PER_SEC,
};
use crate::telemetry::{World, WorldConfig};

/// The four compared schemes: classifier architecture x storage/consensus
/// backend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    LstmBlockchain,
    DnnBlockchain,
    LstmCentral,
    DnnCentral,
}

pub const ALL_SCHEMES: [Scheme; 4] = [
    Scheme::LstmBlockchain,
    Scheme::DnnBlockchain,
    Scheme::LstmCentral,
    Scheme::DnnCentral,
];

impl Scheme {
    pub fn is_blockchain(self) -> bool {
        matches!(self, Scheme::LstmBlockchain | Scheme::DnnBlockchain)
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Scheme::LstmBlockchain | Scheme::LstmCentral => Architecture::Lstm2,
            Scheme::DnnBlockchain | Scheme::DnnCentral => Architecture::Dnn4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::LstmBlockchain => "lstm_blockchain",
            Scheme::DnnBlockchain => "dnn_blockchain",
            Scheme::LstmCentral => "lstm_central",
            Scheme::DnnCentral => "dnn_central",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Scheme::LstmBlockchain => 1,
            Scheme::DnnBlockchain => 2,
            Scheme::LstmCentral => 3,
            Scheme::DnnCentral => 4,
        }
    }
}

/// Full description of one scenario run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub rsu_count: u32,
    pub cav_count: u32,
    /// Unregistered-identity forgers (the default malicious profile).
    pub malicious_count: u32,
    /// Registered forgers reporting kinematically implausible states.
    pub malicious_implausible: u32,
    /// Registered forgers replaying their first record.
    pub malicious_replay: u32,
    pub scheme: Scheme,
    pub committee_size: u32,
    pub duration_s: u64,
    pub round_interval_us: u64,
    pub hidden: usize,
    pub dropout: f64,
    pub train: TrainConfig,
    pub thresholds: Thresholds,
    pub link: LinkModel,
    pub faults: FaultScript,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            seed: 1,
            rsu_count: 20,
            cav_count: 300,
            malicious_count: 0,
            malicious_implausible: 0,
            malicious_replay: 0,
            scheme: Scheme::LstmBlockchain,
            committee_size: 7,
            duration_s: 10,
            round_interval_us: US_PER_SEC,
            hidden: 32,
            dropout: 0.1,
            train: TrainConfig::default(),
            thresholds: Thresholds::default(),
            link: LinkModel::instant(),
            faults: FaultScript::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioError {
    /// One message per offending field.
    ConfigInvalid(Vec<String>),
    Train(AssessError),
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut errs = Vec::new();
        if self.rsu_count == 0 {
            errs.push(String::from("rsu_count: must be positive"));
        }
        if self.cav_count == 0 {
            errs.push(String::from("cav_count: must be positive"));
        }
        if self.duration_s == 0 {
            errs.push(String::from("duration_s: must be positive"));
        }
        if self.round_interval_us == 0 {
            errs.push(String::from("round_interval_us: must be positive"));
        }
        if self.committee_size < 4 {
            errs.push(format!(
                "committee_size: {} below the BFT minimum of 4",
                self.committee_size
            ));
        }
        if self.committee_size > self.rsu_count {
            errs.push(format!(
                "committee_size: {} exceeds rsu_count {}",
                self.committee_size, self.rsu_count
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            errs.push(format!("dropout: {} outside [0, 1)", self.dropout));
        }
        if self.hidden == 0 {
            errs.push(String::from("hidden: must be positive"));
        }
        if self.train.iterations == 0 {
            errs.push(String::from("train.iterations: must be positive"));
        }
        if self.train.batch == 0 {
            errs.push(String::from("train.batch: must be positive"));
        }
        if !(self.train.lr > 0.0) {
            errs.push(String::from("train.lr: must be positive"));
        }
        if !(0.0 < self.thresholds.alpha
            && self.thresholds.alpha < self.thresholds.beta
            && self.thresholds.beta < 1.0)
        {
            errs.push(String::from("thresholds: need 0 < alpha < beta < 1"));
        }
        if !(0.0..=1.0).contains(&self.link.drop_probability) {
            errs.push(String::from("link.drop_probability: outside [0, 1]"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::ConfigInvalid(errs))
        }
    }

    fn world_config(&self) -> WorldConfig {
        WorldConfig {
            seed: self.seed,
            rsu_count: self.rsu_count,
            cav_count: self.cav_count,
            forger_unregistered: self.malicious_count,
            forger_implausible: self.malicious_implausible,
            forger_replay: self.malicious_replay,
        }
    }

    /// Seed for model initialization; distinct per scheme so the two
    /// architectures never share weights by accident.
    pub fn model_seed(&self) -> u64 {
        self.seed ^ (self.scheme.tag() << 56)
    }
}

/// Aggregated counters of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub blocks_finalized: u64,
    pub admitted_records: usize,
    /// Unique records rejected by the admission filter, per verdict name.
    pub rejected_by_verdict: BTreeMap<String, usize>,
    /// Consensus messages sent, per kind and per round.
    pub signaling_by_round: BTreeMap<u64, BTreeMap<String, u64>>,
    pub signaling_total: u64,
    pub data_messages: u64,
    pub honest_emitted: usize,
    pub forged_emitted: usize,
    /// Non-crashed RSUs whose tip disagreed with the reference chain.
    pub divergent_tips: u32,
    /// Digest over all emitted records in emission order: the paired-run
    /// fingerprint showing telemetry is independent of the backend.
    pub telemetry_digest: Digest,
}

/// Output of one scenario run: the populated store plus logs and counters.
pub struct ScenarioResult {
    pub chain: Option<Chain>,
    pub central: Option<CentralStore>,
    pub nodes: Vec<RsuNode>,
    pub log: Vec<LogEntry>,
    pub metrics: RunMetrics,
    pub honest_keys: Vec<PublicKey>,
    pub registered_keys: Vec<PublicKey>,
}

impl ScenarioResult {
    pub fn store(&self) -> Store<'_> {
        match (&self.chain, &self.central) {
            (Some(c), _) => Store::Chain(c),
            (_, Some(c)) => Store::Central(c),
            _ => unreachable!("every run populates exactly one store"),
        }
    }
}

/// Run `duration_s` seconds of telemetry through the configured backend.
pub fn run_scenario(config: &ExperimentConfig) -> Result<ScenarioResult, ScenarioError> {
    config.validate()?;
    if config.scheme.is_blockchain() {
        run_blockchain(config)
    } else {
        run_central(config)
    }
}

fn telemetry_fingerprint(stream: &[Vec<u8>]) -> Digest {
    let mut all = Vec::new();
    for bytes in stream {
        all.extend_from_slice(bytes);
    }
    digest(&all)
}

fn run_central(config: &ExperimentConfig) -> Result<ScenarioResult, ScenarioError> {
    let mut world = World::new(config.world_config());
    let mut store = CentralStore::default();
    let mut metrics = RunMetrics::default();
    let mut stream = Vec::new();
    for t in 0..config.duration_s {
        for addressed in world.emit_records(t) {
            stream.push(addressed.record.canonical_bytes());
            if addressed.forged {
                metrics.forged_emitted += 1;
            } else {
                metrics.honest_emitted += 1;
            }
            metrics.data_messages += 1;
            if !store.ingest(addressed.record) {
                *metrics
                    .rejected_by_verdict
                    .entry(String::from("reject_bad_signature"))
                    .or_default() += 1;
            }
        }
        world.step(1.0);
    }
    metrics.admitted_records = store.record_count();
    metrics.telemetry_digest = telemetry_fingerprint(&stream);
    Ok(ScenarioResult {
        chain: None,
        central: Some(store),
        nodes: Vec::new(),
        log: Vec::new(),
        metrics,
        honest_keys: world.honest_keys(),
        registered_keys: world.registered_keys(),
    })
}

fn verdict_name(v: AdmissionVerdict) -> &'static str {
    match v {
        AdmissionVerdict::Admit => "admit",
        AdmissionVerdict::RejectUnknownIdentity => "reject_unknown_identity",
        AdmissionVerdict::RejectBadSignature => "reject_bad_signature",
        AdmissionVerdict::RejectStale => "reject_stale",
        AdmissionVerdict::RejectImplausible => "reject_implausible",
    }
}

fn run_blockchain(config: &ExperimentConfig) -> Result<ScenarioResult, ScenarioError> {
    let mut world = World::new(config.world_config());
    let registered = world.registered_keys();
    let pool = StakePool::uniform(config.rsu_count, 5.0);
    let committee = elect_committee(&pool, config.committee_size, 0)
        .map_err(|_| ScenarioError::ConfigInvalid(vec![String::from("committee_size")]))?;
    let ctx = NetContext {
        committee_size: config.committee_size,
        rsu_count: config.rsu_count,
        pool,
        rewards: RewardConfig::default(),
        round_interval_us: config.round_interval_us,
        rsu_keys: world.rsus.iter().map(|r| r.identity.public_key).collect(),
    };
    let mut nodes: Vec<RsuNode> = world
        .rsus
        .iter()
        .enumerate()
        .map(|(i, r)| {
            RsuNode::new(
                i as u32,
                r.identity,
                r.key.clone(),
                Chain::new(registered.iter().copied()),
                committee.clone(),
            )
        })
        .collect();

    let mut sched: Scheduler<Msg> = Scheduler::new(config.seed);
    sched.load_faults(&config.faults);
    let interval = config.round_interval_us;
    for t in 0..config.duration_s {
        // Emission tick for second t, then round t's proposal and deadline.
        // Insertion order makes round t-1's deadline run before round t's
        // start when they coincide, so re-elections apply between rounds.
        sched.schedule_timer(t * US_PER_SEC, NodeId::Harness, t);
        for i in 0..config.rsu_count {
            sched.schedule_timer(
                t * US_PER_SEC + interval / 2,
                NodeId::Rsu(i),
                timer_tag(TIMER_ROUND_START, t),
            );
        }
        for i in 0..config.rsu_count {
            sched.schedule_timer(
                t * US_PER_SEC + interval / 2 + interval,
                NodeId::Rsu(i),
                timer_tag(TIMER_ROUND_DEADLINE, t),
            );
        }
    }

    let mut metrics = RunMetrics::default();
    let mut stream = Vec::new();
    let link = config.link;
    let t_end = (config.duration_s + 2) * US_PER_SEC;
    sched.run_until(t_end, |s, ev: Event<Msg>| match ev.payload {
        Payload::Fault(f) => {
            if let NodeId::Rsu(i) = f.node {
                let node = &mut nodes[i as usize];
                node.mode = match f.action {
                    FaultAction::Crash => NodeMode::Crashed,
                    FaultAction::Recover => NodeMode::Honest,
                    FaultAction::Byzantine(code) => NodeMode::Byzantine(
                        ByzMode::from_code(code).unwrap_or(ByzMode::Silent),
                    ),
                };
            }
        }
        Payload::Timer { node: NodeId::Harness, tag: t } => {
            for (vi, addressed) in world.emit_records(t).into_iter().enumerate() {
                stream.push(addressed.record.canonical_bytes());
                if addressed.forged {
                    metrics.forged_emitted += 1;
                } else {
                    metrics.honest_emitted += 1;
                }
                metrics.data_messages += 1;
                s.send(
                    NodeId::Vehicle(vi as u32),
                    NodeId::Rsu(addressed.rsu),
                    Msg::Submit(addressed.record),
                    &link,
                );
            }
            world.step(1.0);
        }
        Payload::Timer { node: NodeId::Rsu(i), tag } => {
            let out = nodes[i as usize].handle_timer(&ctx, tag);
            dispatch(s, &mut metrics, NodeId::Rsu(i), out, &link);
        }
        Payload::Deliver { from, to: NodeId::Rsu(i), msg } => {
            let out = nodes[i as usize].handle_message(&ctx, from, msg);
            dispatch(s, &mut metrics, NodeId::Rsu(i), out, &link);
        }
        _ => {}
    });

    // Reference chain: first non-crashed node; every other live replica must
    // agree (consensus safety surfaced as a metric and a debug assert).
    let reference = nodes
        .iter()
        .find(|n| n.mode != NodeMode::Crashed)
        .expect("at least one live RSU");
    let chain = reference.chain.clone();
    for n in &nodes {
        if n.mode != NodeMode::Crashed && n.chain.tip_digest() != chain.tip_digest() {
            metrics.divergent_tips += 1;
        }
    }
    metrics.blocks_finalized = chain.height();
    metrics.admitted_records = chain.admitted_record_count();

    // Unique admission verdicts across all validators.
    let mut verdicts: BTreeMap<Digest, AdmissionVerdict> = BTreeMap::new();
    for n in &nodes {
        for (d, v) in &n.verdicts {
            verdicts.insert(*d, *v);
        }
    }
    for v in verdicts.values() {
        if *v != AdmissionVerdict::Admit {
            *metrics
                .rejected_by_verdict
                .entry(String::from(verdict_name(*v)))
                .or_default() += 1;
        }
    }
    metrics.telemetry_digest = telemetry_fingerprint(&stream);

    Ok(ScenarioResult {
        chain: Some(chain),
        central: None,
        nodes,
        log: core::mem::take(&mut sched.log),
        metrics,
        honest_keys: world.honest_keys(),
        registered_keys: registered,
    })
}

fn dispatch(
    s: &mut Scheduler<Msg>,
    metrics: &mut RunMetrics,
    from: NodeId,
    out: Vec<(NodeId, Msg)>,
    link: &LinkModel,
) {
    for (to, msg) in out {
        if msg.is_signaling() {
            metrics.signaling_total += 1;
            let round = msg.round().unwrap_or(u64::MAX);
            *metrics
                .signaling_by_round
                .entry(round)
                .or_default()
                .entry(String::from(msg.kind()))
                .or_default() += 1;
        } else {
            metrics.data_messages += 1;
        }
        s.send(from, to, msg, link);
    }
}

// ---------------------------------------------------------------------------
// Dataset assembly and the two result tables
// ---------------------------------------------------------------------------

/// Train/test material of one run. The test set is always honest-only:
/// forged windows have no meaningful ground truth to score against.
pub struct PreparedData {
    pub train: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
    /// Training sequences from non-honest vehicle keys (poison, if any).
    pub forged_in_train: usize,
}

pub fn prepare_experiment_data(result: &ScenarioResult, split_seed: u64) -> PreparedData {
    let honest: BTreeSet<PublicKey> = result.honest_keys.iter().copied().collect();
    let all = assessment::prepare_dataset(&result.store(), SEQ_LEN);
    let mut honest_seqs = Vec::new();
    let mut forged_seqs = Vec::new();
    for seq in all {
        if honest.contains(&seq.vehicle) {
            honest_seqs.push(seq);
        } else {
            forged_seqs.push(seq);
        }
    }
    let forged_in_train = forged_seqs.len();
    let (mut train, test) = assessment::split_dataset(honest_seqs, split_seed);
    train.extend(forged_seqs);
    PreparedData { train, test, forged_in_train }
}

/// One fully trained scheme: the loss trace plus held-out evaluation.
pub struct SchemeRun {
    pub scheme: Scheme,
    pub loss_trace: Vec<f64>,
    /// Mean cross-entropy over the full training set after training.
    pub final_train_loss: f64,
    pub accuracy: f64,
    pub confusion: [[u32; 4]; 4],
    pub forged_in_train: usize,
    pub metrics: RunMetrics,
    /// The trained model, so callers can persist or re-evaluate it.
    pub params: ModelParams,
}

/// Simulate, prepare, train, and evaluate one scheme.
pub fn run_scheme(config: &ExperimentConfig) -> Result<SchemeRun, ScenarioError> {
    let result = run_scenario(config)?;
    let data = prepare_experiment_data(&result, config.seed);
    let mut params = ModelParams::init(
        config.scheme.architecture(),
        config.hidden,
        config.dropout,
        config.model_seed(),
    );
    let mut train_cfg = config.train;
    train_cfg.seed = config.seed;
    let loss_trace = assessment::train(&mut params, &data.train, &train_cfg)
        .map_err(ScenarioError::Train)?;
    let final_train_loss = assessment::dataset_loss(&params, &data.train);
    let eval = assessment::evaluate(&params, &data.test);
    Ok(SchemeRun {
        scheme: config.scheme,
        loss_trace,
        final_train_loss,
        accuracy: eval.accuracy,
        confusion: eval.confusion,
        forged_in_train: data.forged_in_train,
        metrics: result.metrics,
        params,
    })
}

/// Loss-vs-iteration curves for all four schemes at the configured
/// malicious count.
pub struct LossCurves {
    pub iterations: usize,
    pub runs: Vec<SchemeRun>,
}

pub fn reproduce_loss_curves(base: &ExperimentConfig) -> Result<LossCurves, ScenarioError> {
    let mut runs = Vec::new();
    for scheme in ALL_SCHEMES {
        let mut cfg = base.clone();
        cfg.scheme = scheme;
        runs.push(run_scheme(&cfg)?);
    }
    Ok(LossCurves { iterations: base.train.iterations, runs })
}

/// Accuracy of all four schemes at each malicious count.
pub struct AccuracyGrid {
    pub counts: Vec<u32>,
    /// rows[i][j] = accuracy at counts[i] under ALL_SCHEMES[j].
    pub rows: Vec<[f64; 4]>,
}

pub fn reproduce_accuracy_sweep(
    base: &ExperimentConfig,
    counts: &[u32],
) -> Result<AccuracyGrid, ScenarioError> {
    let mut rows = Vec::new();
    for &count in counts {
        let mut row = [0.0; 4];
        for (j, scheme) in ALL_SCHEMES.iter().enumerate() {
            let mut cfg = base.clone();
            cfg.scheme = *scheme;
            cfg.malicious_count = count;
            row[j] = run_scheme(&cfg)?.accuracy;
        }
        rows.push(row);
    }
    Ok(AccuracyGrid { counts: counts.to_vec(), rows })
}
