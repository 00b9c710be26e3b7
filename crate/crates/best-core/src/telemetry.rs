//! Synthetic CAV world: constant-acceleration kinematics, per-second signed
//! status records, nearest-RSU association, and configurable forgery
//! behaviors for the malicious population.
//!
//! Geometry is a flat 2 km x 2 km plane with RSUs on a fixed grid and
//! vehicles on straight lanes with fixed headings. Velocities are stored in
//! m/s throughout; the 50 km/h cap from the scenario setup converts to
//! `V_MAX_MPS`.

use alloc::vec::Vec;

use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::crypto::{
    self, Canonical, CanonicalWriter, Identity, IdentityKind, PrivateKey, PublicKey, Signature,
};

/// 50 km/h in m/s: the initial-velocity upper bound reused as a hard cap.
pub const V_MAX_MPS: f64 = 50.0 / 3.6;
/// Maximum acceleration magnitude, m/s^2.
pub const A_MAX: f64 = 10.0;
/// Vehicles within this radius count as neighbors, meters.
pub const NEIGHBOR_RADIUS_M: f64 = 50.0;
/// Reported min_distance when a vehicle has no other vehicle in the world.
pub const NO_NEIGHBOR_DISTANCE_M: f64 = 1.0e9;
/// Side length of the square simulation area, meters.
pub const AREA_SIDE_M: f64 = 2_000.0;

/// Kinematic and proximity snapshot of one vehicle at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: [f64; 2],
    /// Scalar speed along the fixed heading, m/s. Clamped to [0, v_max] for
    /// honest vehicles; forged records may claim anything.
    pub velocity: f64,
    pub acceleration: f64,
    pub heading: [f64; 2],
    pub neighbor_count: u32,
    pub min_distance: f64,
}

impl Canonical for VehicleState {
    fn write_canonical(&self, w: &mut CanonicalWriter) {
        w.f64(self.position[0])
            .f64(self.position[1])
            .f64(self.velocity)
            .f64(self.acceleration)
            .f64(self.heading[0])
            .f64(self.heading[1])
            .u32(self.neighbor_count)
            .f64(self.min_distance);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Actions {
    pub brake: bool,
    pub turn: bool,
}

/// One signed per-second driving snapshot: the blockchain "transaction".
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusRecord {
    pub vehicle: PublicKey,
    pub timestamp: u64,
    pub state: VehicleState,
    pub actions: Actions,
    /// VRI fed back from the previous assessment; absent for the first window.
    pub prior_vri: Option<f64>,
    pub signature: Signature,
}

impl StatusRecord {
    /// Canonical bytes of everything the signature covers.
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::new();
        w.fixed(&self.vehicle.0).u64(self.timestamp);
        self.state.write_canonical(&mut w);
        w.u8(self.actions.brake as u8)
            .u8(self.actions.turn as u8)
            .opt_f64(self.prior_vri);
        w.finish()
    }

    pub fn verify_signature(&self) -> bool {
        crypto::verify(&self.signed_bytes(), &self.signature, &self.vehicle)
    }
}

impl Canonical for StatusRecord {
    fn write_canonical(&self, w: &mut CanonicalWriter) {
        w.bytes(&self.signed_bytes());
        w.fixed(&self.signature.bytes);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BehaviorProfile {
    Honest,
    /// Signs with a key absent from the chain registry.
    ForgerUnregistered,
    /// Registered, but reports states violating the kinematic bound against
    /// its latest on-chain record.
    ForgerImplausible,
    /// Registered; re-submits its first admitted record with a stale timestamp.
    ForgerReplay,
}

pub struct Vehicle {
    pub identity: Identity,
    pub key: PrivateKey,
    pub profile: BehaviorProfile,
    pub state: VehicleState,
    /// Commanded constant acceleration; the state clamps at 0 and v_max.
    pub commanded_accel: f64,
    pub prior_vri: Option<f64>,
    /// Replay forgers cache their first (honest-content) record here.
    seed_record: Option<StatusRecord>,
    /// Velocity claimed in the forger's first record, the baseline its later
    /// implausible claims jump away from.
    seed_velocity: f64,
}

pub struct Rsu {
    pub identity: Identity,
    pub key: PrivateKey,
    pub position: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub seed: u64,
    pub rsu_count: u32,
    pub cav_count: u32,
    pub forger_unregistered: u32,
    pub forger_implausible: u32,
    pub forger_replay: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            seed: 0,
            rsu_count: 20,
            cav_count: 300,
            forger_unregistered: 0,
            forger_implausible: 0,
            forger_replay: 0,
        }
    }
}

impl WorldConfig {
    pub fn malicious_count(&self) -> u32 {
        self.forger_unregistered + self.forger_implausible + self.forger_replay
    }
}

/// A record addressed to its nearest RSU, with bookkeeping for experiments.
#[derive(Clone, Debug, PartialEq)]
pub struct AddressedRecord {
    pub record: StatusRecord,
    pub rsu: u32,
    /// True for emissions whose content is forged. A registered forger's
    /// first record carries honest content (there is nothing on-chain yet to
    /// contradict) and is not counted as forged.
    pub forged: bool,
}

fn uniform_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn uniform_in(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + uniform_f64(rng) * (hi - lo)
}

fn vehicle_seed(run_seed: u64, tag: u8, index: u32) -> u64 {
    let mut w = CanonicalWriter::new();
    w.u64(run_seed).u8(tag).u32(index);
    let d = crypto::digest(&w.finish());
    u64::from_be_bytes(d.0[..8].try_into().unwrap())
}

/// Exact constant-acceleration advance over dt with clamping at 0 and v_max.
/// Returns the new velocity and the displacement along the heading,
/// integrating piecewise when the velocity hits a bound mid-step.
pub fn advance_velocity(v: f64, a: f64, dt: f64, v_max: f64) -> (f64, f64) {
    if a == 0.0 {
        return (v, v * dt);
    }
    let (bound, t_hit) = if a > 0.0 {
        (v_max, (v_max - v) / a)
    } else {
        (0.0, v / -a)
    };
    if t_hit >= dt {
        (v + a * dt, v * dt + 0.5 * a * dt * dt)
    } else {
        let before = v * t_hit + 0.5 * a * t_hit * t_hit;
        (bound, before + bound * (dt - t_hit))
    }
}

pub struct World {
    pub config: WorldConfig,
    pub clock_s: u64,
    pub vehicles: Vec<Vehicle>,
    pub rsus: Vec<Rsu>,
    /// RNG for forged content; separate from the honest stream so adding
    /// forgers never perturbs honest trajectories.
    forger_rng: rand_chacha::ChaCha20Rng,
}

impl World {
    pub fn new(config: WorldConfig) -> World {
        let mut honest_rng =
            rand_chacha::ChaCha20Rng::seed_from_u64(vehicle_seed(config.seed, 0, 0));
        let forger_rng =
            rand_chacha::ChaCha20Rng::seed_from_u64(vehicle_seed(config.seed, 1, 0));

        let rsus = (0..config.rsu_count)
            .map(|i| {
                let (identity, key) =
                    crypto::generate_identity(vehicle_seed(config.seed, 2, i), IdentityKind::Rsu);
                Rsu {
                    identity,
                    key,
                    position: rsu_grid_position(i, config.rsu_count),
                }
            })
            .collect();

        let mut vehicles = Vec::new();
        let mut add = |profile: BehaviorProfile, tag: u8, idx: u32, rng: &mut rand_chacha::ChaCha20Rng| {
            let (identity, key) =
                crypto::generate_identity(vehicle_seed(config.seed, tag, idx), IdentityKind::Vehicle);
            let angle = uniform_in(rng, 0.0, 2.0 * core::f64::consts::PI);
            let state = VehicleState {
                position: [
                    uniform_in(rng, 0.0, AREA_SIDE_M),
                    uniform_in(rng, 0.0, AREA_SIDE_M),
                ],
                // A slice of the traffic enters already pinned at the cap
                // (the draw clamps), matching roads where cruising at the
                // limit is the common case.
                velocity: {
                    let v = uniform_in(rng, 0.0, 1.4 * V_MAX_MPS);
                    if v > V_MAX_MPS {
                        V_MAX_MPS
                    } else {
                        v
                    }
                },
                acceleration: uniform_in(rng, -A_MAX, A_MAX),
                heading: [libm::cos(angle), libm::sin(angle)],
                neighbor_count: 0,
                min_distance: 0.0,
            };
            let commanded = state.acceleration;
            vehicles.push(Vehicle {
                identity,
                key,
                profile,
                state,
                commanded_accel: commanded,
                prior_vri: None,
                seed_record: None,
                seed_velocity: 0.0,
            });
        };

        for i in 0..config.cav_count {
            add(BehaviorProfile::Honest, 3, i, &mut honest_rng);
        }
        // The malicious population is disjoint from, and added on top of,
        // the honest CAVs. It draws from its own RNG stream.
        let mut mal_rng = forger_rng.clone();
        for i in 0..config.forger_unregistered {
            add(BehaviorProfile::ForgerUnregistered, 4, i, &mut mal_rng);
        }
        for i in 0..config.forger_implausible {
            add(BehaviorProfile::ForgerImplausible, 5, i, &mut mal_rng);
        }
        for i in 0..config.forger_replay {
            add(BehaviorProfile::ForgerReplay, 6, i, &mut mal_rng);
        }

        let mut world = World {
            config,
            clock_s: 0,
            vehicles,
            rsus,
            forger_rng: mal_rng,
        };
        world.recompute_proximity();
        world
    }

    /// Public keys of all registered vehicles. Unregistered forgers never
    /// enter the registry; the other forger profiles do.
    pub fn registered_keys(&self) -> Vec<PublicKey> {
        self.vehicles
            .iter()
            .filter(|v| v.profile != BehaviorProfile::ForgerUnregistered)
            .map(|v| v.identity.public_key)
            .collect()
    }

    pub fn honest_keys(&self) -> Vec<PublicKey> {
        self.vehicles
            .iter()
            .filter(|v| v.profile == BehaviorProfile::Honest)
            .map(|v| v.identity.public_key)
            .collect()
    }

    /// Advance every vehicle by dt seconds of constant-acceleration motion,
    /// then recompute neighbor counts and pairwise minimum distances.
    pub fn step(&mut self, dt: f64) {
        assert!(dt > 0.0);
        for v in &mut self.vehicles {
            let (nv, disp) = advance_velocity(v.state.velocity, v.commanded_accel, dt, V_MAX_MPS);
            v.state.position[0] += disp * v.state.heading[0];
            v.state.position[1] += disp * v.state.heading[1];
            v.state.velocity = nv;
        }
        self.recompute_proximity();
        self.clock_s += dt as u64;
    }

    /// Forgers attack the messaging layer only; they do not physically occupy
    /// the road. The neighbor set is therefore the honest population, which
    /// keeps every honest record invariant to the attack mix.
    fn recompute_proximity(&mut self) {
        let positions: Vec<(usize, [f64; 2])> = self
            .vehicles
            .iter()
            .enumerate()
            .filter(|(_, v)| v.profile == BehaviorProfile::Honest)
            .map(|(j, v)| (j, v.state.position))
            .collect();
        for (i, v) in self.vehicles.iter_mut().enumerate() {
            let mut min_d = NO_NEIGHBOR_DISTANCE_M;
            let mut count = 0u32;
            for (j, p) in positions.iter() {
                if i == *j {
                    continue;
                }
                let dx = p[0] - v.state.position[0];
                let dy = p[1] - v.state.position[1];
                let d = libm::sqrt(dx * dx + dy * dy);
                if d < min_d {
                    min_d = d;
                }
                if d <= NEIGHBOR_RADIUS_M {
                    count += 1;
                }
            }
            v.state.min_distance = min_d;
            v.state.neighbor_count = count;
        }
    }

    /// Index of the nearest RSU by Euclidean distance; ties break toward the
    /// lower RSU id.
    pub fn nearest_rsu(&self, position: [f64; 2]) -> u32 {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (i, r) in self.rsus.iter().enumerate() {
            let dx = r.position[0] - position[0];
            let dy = r.position[1] - position[1];
            let d = dx * dx + dy * dy;
            if d < best_d {
                best_d = d;
                best = i as u32;
            }
        }
        best
    }

    fn sign_record(
        key: &PrivateKey,
        vehicle: PublicKey,
        timestamp: u64,
        state: VehicleState,
        actions: Actions,
        prior_vri: Option<f64>,
    ) -> StatusRecord {
        let mut rec = StatusRecord {
            vehicle,
            timestamp,
            state,
            actions,
            prior_vri,
            signature: Signature {
                bytes: [0u8; crypto::SIGNATURE_LEN],
                signer: vehicle,
            },
        };
        rec.signature = crypto::sign(&rec.signed_bytes(), key);
        rec
    }

    fn honest_record(v: &Vehicle, t: u64) -> StatusRecord {
        let actions = Actions {
            brake: v.commanded_accel < 0.0,
            turn: false,
        };
        Self::sign_record(
            &v.key,
            v.identity.public_key,
            t,
            v.state,
            actions,
            v.prior_vri,
        )
    }

    /// One signed record per vehicle at timestamp t, honest vehicles first in
    /// index order, each addressed to its nearest RSU. Forger emissions use
    /// their profile's forgery rule.
    pub fn emit_records(&mut self, t: u64) -> Vec<AddressedRecord> {
        assert_eq!(t, self.clock_s, "emission must match the world clock");
        let mut out = Vec::with_capacity(self.vehicles.len());
        let mut forger_rng = self.forger_rng.clone();
        for idx in 0..self.vehicles.len() {
            let rsu = self.nearest_rsu(self.vehicles[idx].state.position);
            let (record, forged) = match self.vehicles[idx].profile {
                BehaviorProfile::Honest => (Self::honest_record(&self.vehicles[idx], t), false),
                _ => self.forge_record(idx, t, &mut forger_rng),
            };
            out.push(AddressedRecord { record, rsu, forged });
        }
        self.forger_rng = forger_rng;
        out
    }

    /// Produce one forger emission. The first emission of a registered forger
    /// is its true state (admissible); every later one violates exactly one
    /// admission rule.
    fn forge_record(
        &mut self,
        idx: usize,
        t: u64,
        rng: &mut rand_chacha::ChaCha20Rng,
    ) -> (StatusRecord, bool) {
        let profile = self.vehicles[idx].profile;
        match profile {
            BehaviorProfile::Honest => unreachable!("honest vehicles do not forge"),
            BehaviorProfile::ForgerUnregistered => {
                // Dishonest content dressed up as ordinary cruising: the
                // record is the forger's genuine physical state except for a
                // claimed velocity far beyond the cap. The normalized
                // velocity feature clamps to 1.0 — exactly where honest
                // at-the-cap vehicles sit — so the forged rows are feature-
                // indistinguishable from safe traffic, while the ground-truth
                // score of the claim lands in the high-risk classes.
                let v = &self.vehicles[idx];
                let mut state = v.state;
                state.velocity = uniform_in(rng, 1.5 * V_MAX_MPS, 4.0 * V_MAX_MPS);
                // Claimed acceleration is always positive: the forged rows
                // land in the same feature region as honest vehicles pinned
                // at the cap by a positive commanded acceleration.
                state.acceleration = libm::fabs(state.acceleration);
                let actions = Actions { brake: false, turn: false };
                let rec = Self::sign_record(
                    &v.key,
                    v.identity.public_key,
                    t,
                    state,
                    actions,
                    None,
                );
                (rec, true)
            }
            BehaviorProfile::ForgerImplausible => {
                if self.vehicles[idx].seed_record.is_none() {
                    let rec = Self::honest_record(&self.vehicles[idx], t);
                    let v = &mut self.vehicles[idx];
                    v.seed_velocity = v.state.velocity;
                    v.seed_record = Some(rec);
                    return (rec, false);
                }
                // Correctly signed, kinematically impossible: a sustained
                // 40 m/s-per-second velocity jump against its only on-chain
                // record, so the claim violates |dv| <= a_max * dt at any dt.
                let v = &self.vehicles[idx];
                let mut state = v.state;
                state.velocity = v.seed_velocity + 40.0 * t as f64;
                let actions = Actions { brake: false, turn: false };
                let rec = Self::sign_record(
                    &v.key,
                    v.identity.public_key,
                    t,
                    state,
                    actions,
                    None,
                );
                (rec, true)
            }
            BehaviorProfile::ForgerReplay => {
                if self.vehicles[idx].seed_record.is_none() {
                    let rec = Self::honest_record(&self.vehicles[idx], t);
                    self.vehicles[idx].seed_record = Some(rec);
                    return (rec, false);
                }
                // Verbatim re-submission of the already-admitted record; its
                // timestamp is stale against the vehicle's on-chain history.
                (self.vehicles[idx].seed_record.unwrap(), true)
            }
        }
    }

    /// Close the assessment feedback loop: the given VRI rides along in the
    /// vehicle's next record as prior_vri.
    pub fn set_prior_vri(&mut self, vehicle: &PublicKey, vri: f64) {
        if let Some(v) = self
            .vehicles
            .iter_mut()
            .find(|v| v.identity.public_key == *vehicle)
        {
            v.prior_vri = Some(vri);
        }
    }
}

fn rsu_grid_position(index: u32, count: u32) -> [f64; 2] {
    // Fixed grid: 5 columns for the default 20-RSU layout, otherwise the
    // squarest grid that fits.
    let cols = if count == 20 {
        5
    } else {
        let mut c = 1u32;
        while c * c < count {
            c += 1;
        }
        c
    };
    let rows = count.div_ceil(cols);
    let col = index % cols;
    let row = index / cols;
    let dx = AREA_SIDE_M / cols as f64;
    let dy = AREA_SIDE_M / rows as f64;
    [dx * (col as f64 + 0.5), dy * (row as f64 + 0.5)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_acceleration_advance() {
        // s = v t + a t^2 / 2
        let (v, s) = advance_velocity(10.0, 2.0, 1.0, 100.0);
        assert_eq!(v, 12.0);
        assert_eq!(s, 11.0);
    }

    #[test]
    fn velocity_clamps_at_zero() {
        let (v, s) = advance_velocity(1.0, -10.0, 1.0, 100.0);
        assert_eq!(v, 0.0);
        // Stops after 0.1 s having covered 0.05 m, then stays put.
        assert!((s - 0.05).abs() < 1e-12);
    }

    #[test]
    fn velocity_clamps_at_cap() {
        let (v, s) = advance_velocity(9.0, 2.0, 1.0, 10.0);
        assert_eq!(v, 10.0);
        // 0.5 s to the cap (4.75 m), then 0.5 s cruising (5 m).
        assert!((s - 9.75).abs() < 1e-12);
    }

    #[test]
    fn min_distance_matches_brute_force_oracle() {
        let mut world = World::new(WorldConfig {
            seed: 11,
            cav_count: 300,
            ..WorldConfig::default()
        });
        world.step(1.0);
        let pos: Vec<[f64; 2]> = world.vehicles.iter().map(|v| v.state.position).collect();
        for (i, v) in world.vehicles.iter().enumerate() {
            let mut oracle = f64::INFINITY;
            for (j, p) in pos.iter().enumerate() {
                if i != j {
                    let d = ((p[0] - pos[i][0]).powi(2) + (p[1] - pos[i][1]).powi(2)).sqrt();
                    oracle = oracle.min(d);
                }
            }
            assert_eq!(v.state.min_distance, oracle, "vehicle {i}");
        }
    }

    #[test]
    fn association_matches_exhaustive_nearest_rsu_search() {
        let mut world = World::new(WorldConfig { seed: 5, ..WorldConfig::default() });
        let records = world.emit_records(0);
        assert_eq!(records.len(), 300);
        for ar in &records {
            let p = ar.record.state.position;
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (i, r) in world.rsus.iter().enumerate() {
                let d = ((r.position[0] - p[0]).powi(2) + (r.position[1] - p[1]).powi(2)).sqrt();
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            assert_eq!(ar.rsu as usize, best);
        }
    }

    #[test]
    fn equidistant_tie_breaks_to_lower_rsu_id() {
        let world = World::new(WorldConfig { seed: 5, cav_count: 1, ..WorldConfig::default() });
        // Default grid: RSU 0 at (200, 250), RSU 1 at (600, 250).
        let mid = [400.0, 250.0];
        assert_eq!(world.nearest_rsu(mid), 0);
    }

    #[test]
    fn honest_records_verify_and_are_complete() {
        let mut world = World::new(WorldConfig { seed: 3, cav_count: 20, ..WorldConfig::default() });
        let records = world.emit_records(0);
        assert_eq!(records.len(), 20);
        let mut keys = std::collections::HashSet::new();
        for ar in &records {
            assert!(ar.record.verify_signature());
            assert!(!ar.forged);
            assert!(keys.insert(ar.record.vehicle), "duplicate emission");
        }
    }

    #[test]
    fn record_streams_are_deterministic() {
        let run = |seed| {
            let mut w = World::new(WorldConfig {
                seed,
                cav_count: 30,
                forger_unregistered: 3,
                forger_implausible: 2,
                forger_replay: 2,
                ..WorldConfig::default()
            });
            let mut all = Vec::new();
            for t in 0..5 {
                all.extend(w.emit_records(t).into_iter().map(|a| a.record.canonical_bytes()));
                w.step(1.0);
            }
            all
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77), run(78));
    }

    #[test]
    fn forger_population_does_not_perturb_honest_stream() {
        let capture = |forgers: u32| {
            let mut w = World::new(WorldConfig {
                seed: 9,
                cav_count: 25,
                forger_unregistered: forgers,
                ..WorldConfig::default()
            });
            let mut all = Vec::new();
            for t in 0..3 {
                all.extend(
                    w.emit_records(t)
                        .into_iter()
                        .filter(|a| !a.forged)
                        .take(25)
                        .map(|a| a.record.canonical_bytes()),
                );
                w.step(1.0);
            }
            all
        };
        assert_eq!(capture(0), capture(10));
    }

    #[test]
    fn zero_acceleration_parallel_pair_keeps_distance() {
        // Two vehicles on parallel lanes, same heading and speed, a = 0:
        // their separation must stay constant while positions advance.
        let mut world = World::new(WorldConfig { seed: 1, cav_count: 2, ..WorldConfig::default() });
        for v in &mut world.vehicles {
            v.commanded_accel = 0.0;
            v.state.acceleration = 0.0;
            v.state.heading = [1.0, 0.0];
            v.state.velocity = 5.0;
        }
        world.vehicles[0].state.position = [100.0, 100.0];
        world.vehicles[1].state.position = [100.0, 130.0];
        world.recompute_proximity();
        let d0 = world.vehicles[0].state.min_distance;
        let x0 = world.vehicles[0].state.position[0];
        for _ in 0..5 {
            world.step(1.0);
        }
        assert!((world.vehicles[0].state.min_distance - d0).abs() < 1e-9);
        assert!((world.vehicles[0].state.position[0] - (x0 + 25.0)).abs() < 1e-9);
    }

    #[test]
    fn implausible_forger_jumps_velocity_after_seed_record() {
        let mut world = World::new(WorldConfig {
            seed: 2,
            cav_count: 1,
            forger_implausible: 1,
            ..WorldConfig::default()
        });
        let first = world.emit_records(0);
        assert!(!first[1].forged, "seed record carries honest content");
        let seed_v = first[1].record.state.velocity;
        world.step(1.0);
        let second = world.emit_records(1);
        assert!(second[1].forged);
        let dv = (second[1].record.state.velocity - seed_v).abs();
        assert!(dv > A_MAX, "claimed jump {dv} must violate the kinematic bound");
        assert!(second[1].record.verify_signature());
    }

    #[test]
    fn replay_forger_resubmits_seed_record() {
        let mut world = World::new(WorldConfig {
            seed: 2,
            cav_count: 1,
            forger_replay: 1,
            ..WorldConfig::default()
        });
        let first = world.emit_records(0);
        world.step(1.0);
        let second = world.emit_records(1);
        assert!(second[1].forged);
        assert_eq!(second[1].record, first[1].record);
        assert_eq!(second[1].record.timestamp, 0, "stale timestamp");
    }
}
