use std::collections::VecDeque;
use std::sync::Arc;

use super::rng::RngStreams;
use crate::model::{ApLsi, ArrivalModel, DispatchActionTable, GlobalState, ServerLsi, ValidatedInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InFlightJob {
    pub id: u64,
    pub ap: usize,
    pub server: usize,
    pub job_type: usize,
    /// Slots elapsed since dispatch, as of the start of the current slot.
    pub age: usize,
    pub latency: usize,
    pub arrival_slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueuedJob {
    pub id: u64,
    pub ap: usize,
    pub arrival_slot: u64,
    pub enqueue_slot: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompletedJob {
    pub id: u64,
    pub arrival_slot: u64,
    pub completion_slot: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SlotOutcome {
    pub arrivals: u64,
    pub deliveries: u64,
    pub drops: Vec<u64>,
    pub completed: Vec<CompletedJob>,
}

/// Cumulative per-`(m, j)` queue accounting since the run started.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueLedger {
    pub enqueued: u64,
    pub completed: u64,
    pub dropped: u64,
}

/// Mutable simulation state. Only [`SimState::step_slot`] advances it.
///
/// Phase order inside a slot:
/// 1. arrivals are drawn (or replayed);
/// 2. each arrival starts uploading toward its AP's current target with a
///    sampled latency (0 for the collocated server);
/// 3. every in-flight job whose latency has elapsed is delivered, in
///    `(AP, job id)` order; a delivery into a full queue is a drop,
///    otherwise the job is enqueued and the rest age by one slot;
/// 4. every queue that was nonempty when the slot began completes its head
///    job with probability `1/c` (jobs delivered in this slot wait for the
///    next one);
/// 5. the clock advances.
#[derive(Debug, Clone)]
pub struct SimState {
    slot: u64,
    slots_per_interval: u64,
    next_job_id: u64,
    in_flight: Vec<InFlightJob>,
    queues: Vec<Vec<VecDeque<QueuedJob>>>,
    ledger: Vec<Vec<QueueLedger>>,
    rng: RngStreams,
    trace_cursor: usize,
}

impl SimState {
    /// Empty system at slot 0 with RNG streams derived from `seed`.
    pub fn new(instance: &ValidatedInstance, seed: u64) -> Self {
        let cfg = instance.config();
        let servers = cfg.num_processing_servers();
        Self {
            slot: 0,
            slots_per_interval: cfg.slots_per_interval as u64,
            next_job_id: 0,
            in_flight: Vec::new(),
            queues: vec![vec![VecDeque::new(); cfg.num_job_types]; servers],
            ledger: vec![vec![QueueLedger::default(); cfg.num_job_types]; servers],
            rng: RngStreams::new(seed, cfg.num_aps, servers, cfg.num_job_types),
            trace_cursor: 0,
        }
    }

    /// Absolute slot index of the next slot to simulate.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// `(interval t, slot-in-interval n)`.
    pub fn clock(&self) -> (u64, u64) {
        (self.slot / self.slots_per_interval, self.slot % self.slots_per_interval)
    }

    pub fn in_flight(&self) -> &[InFlightJob] {
        &self.in_flight
    }

    pub fn queue(&self, m: usize, j: usize) -> &VecDeque<QueuedJob> {
        &self.queues[m][j]
    }

    pub fn ledger(&self, m: usize, j: usize) -> QueueLedger {
        self.ledger[m][j]
    }

    pub fn jobs_in_system(&self) -> u64 {
        self.in_flight.len() as u64 + self.queues.iter().flatten().map(|q| q.len() as u64).sum::<u64>()
    }

    /// Overflow-weighted cost of the current state, computed from the raw
    /// job lists.
    pub fn cost(&self, instance: &ValidatedInstance) -> f64 {
        let cfg = instance.config();
        let full = self.queues.iter().flatten().filter(|q| q.len() == cfg.max_queue_len).count();
        self.jobs_in_system() as f64 + cfg.overflow_penalty * full as f64
    }

    /// Draws a signaling latency for AP `k` from its own stream.
    pub fn sample_signaling(&mut self, instance: &ValidatedInstance, k: usize) -> usize {
        let u = self.rng.signaling(k);
        instance.signaling_dist(k).sample(u)
    }

    /// LSIs of every AP and server as of the start of the current slot.
    pub fn snapshot(&self, instance: &ValidatedInstance, actions: &DispatchActionTable) -> GlobalState {
        let cfg = instance.config();
        let mut aps: Vec<ApLsi> = (0..cfg.num_aps).map(|k| ApLsi::empty(instance, k, actions.ap(k).to_vec())).collect();
        for job in &self.in_flight {
            aps[job.ap]
                .transit_mut(job.server, job.job_type)
                .expect("in-flight job toward a non-candidate server")
                .increment(job.age);
        }
        let servers = self
            .queues
            .iter()
            .enumerate()
            .map(|(m, per_type)| Arc::new(ServerLsi { server: m, queue_len: per_type.iter().map(VecDeque::len).collect() }))
            .collect();
        GlobalState { aps: aps.into_iter().map(Arc::new).collect(), servers }
    }

    /// Simulates one slot under `actions`.
    pub fn step_slot(&mut self, instance: &ValidatedInstance, actions: &DispatchActionTable) -> SlotOutcome {
        let cfg = instance.config();
        let now = self.slot;
        let mut outcome = SlotOutcome::default();
        let start_len: Vec<Vec<usize>> =
            self.queues.iter().map(|per_type| per_type.iter().map(VecDeque::len).collect()).collect();

        // (1)-(2) arrivals enter transit.
        match instance.arrivals() {
            ArrivalModel::Bernoulli { prob } => {
                for (k, row) in prob.iter().enumerate() {
                    for (j, &p) in row.iter().enumerate() {
                        if self.rng.arrival(k, j) < p {
                            self.dispatch(instance, actions, k, j, now);
                            outcome.arrivals += 1;
                        }
                    }
                }
            }
            ArrivalModel::Trace { events, .. } => {
                while let Some(e) = events.get(self.trace_cursor) {
                    if e.slot > now {
                        break;
                    }
                    if e.slot == now {
                        for _ in 0..e.count {
                            self.dispatch(instance, actions, e.ap, e.job_type, now);
                            outcome.arrivals += 1;
                        }
                    }
                    self.trace_cursor += 1;
                }
            }
        }

        // (3) deliveries and aging.
        let mut delivered = Vec::new();
        self.in_flight.retain_mut(|job| {
            if job.age >= job.latency {
                delivered.push(*job);
                false
            } else {
                job.age += 1;
                true
            }
        });
        delivered.sort_by_key(|job| (job.ap, job.id));
        for job in delivered {
            let queue = &mut self.queues[job.server][job.job_type];
            let ledger = &mut self.ledger[job.server][job.job_type];
            if queue.len() >= cfg.max_queue_len {
                ledger.dropped += 1;
                outcome.drops.push(job.id);
            } else {
                ledger.enqueued += 1;
                outcome.deliveries += 1;
                queue.push_back(QueuedJob { id: job.id, ap: job.ap, arrival_slot: job.arrival_slot, enqueue_slot: now });
            }
        }

        // (4) head-of-line service. A coin is drawn for every queue every
        // slot to keep the streams aligned across policies.
        for (m, per_type) in self.queues.iter_mut().enumerate() {
            for (j, queue) in per_type.iter_mut().enumerate() {
                let u = self.rng.service(m, j);
                if start_len[m][j] > 0 && u < instance.service().completion_prob(m, j) {
                    let job = queue.pop_front().expect("queue nonempty at slot start");
                    self.ledger[m][j].completed += 1;
                    outcome.completed.push(CompletedJob { id: job.id, arrival_slot: job.arrival_slot, completion_slot: now });
                }
            }
        }

        // (5)
        self.slot += 1;
        outcome
    }

    fn dispatch(&mut self, instance: &ValidatedInstance, actions: &DispatchActionTable, k: usize, j: usize, now: u64) {
        let server = actions.target(k, j);
        let u = self.rng.upload(k, j);
        let latency = instance.latency(k, server, j).sample(u);
        self.in_flight.push(InFlightJob {
            id: self.next_job_id,
            ap: k,
            server,
            job_type: j,
            age: 0,
            latency,
            arrival_slot: now,
        });
        self.next_job_id += 1;
    }
}
