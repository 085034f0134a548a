//! Discrete-event M/G/1 simulator with preemptive least-rank scheduling.
//!
//! The engine exploits the structure of the rank functions: a queued job's
//! rank is frozen (ranks depend only on `(s, z, a)` and age advances only in
//! service), and the serving job's rank is piecewise linear in its age. The
//! next decision epoch is therefore the earliest of the next arrival, the
//! serving job's completion, and the closed-form instant at which the
//! serving job's rank first strictly exceeds the best queued rank. There is
//! no time discretization anywhere, which is what makes exact job-for-job
//! trace comparisons between policies meaningful.
//!
//! Conventions, chosen once and used everywhere:
//! - A new arrival preempts the server only if its rank is strictly lower;
//!   at exact equality the serving job retains the server.
//! - Rank ties between queued jobs resolve by earlier arrival time (FCFS).
//!   Exact ties between distinct jobs have probability zero for continuous
//!   size distributions, with one structural exception: a rank-crossing
//!   freezes the displaced job at exactly the rank of the job that takes
//!   over. When such a tie resurfaces, a job whose rank would immediately
//!   rise must not be handed the server (it would have to yield again after
//!   zero service), so selection prefers jobs whose rank is not about to
//!   increase, and the crossing threshold tracks only such jobs. For the
//!   six policies with monotone or capped ranks this refinement never
//!   changes behavior; it matters only for the uncapped bounce policy,
//!   whose equal-rank rising clusters the analysis treats as
//!   processor-sharing anyway.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::JointSizeModel;
use crate::policy::{JobState, Policy};
use crate::stats::Estimate;
use crate::work::{system_phi_work, WorkPredicate};

/// Jobs allowed in the system before a run is declared unstable and aborted.
pub const SYSTEM_SIZE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, thiserror::Error)]
pub enum SimError {
    #[error("offered load rho = {rho:.4} is not below 1 (lambda {lambda}, mean size {mean_size})")]
    Unstable {
        rho: f64,
        lambda: f64,
        mean_size: f64,
    },
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error(
        "system size exceeded {cap} jobs under policy {policy} at lambda {lambda}; \
         the configuration appears unstable"
    )]
    SystemSizeExceeded {
        policy: &'static str,
        lambda: f64,
        cap: usize,
    },
    #[error("work-integral grid needs at least 32 points, got {points}")]
    GridTooCoarse { points: usize },
}

/// Full description of one simulation experiment.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub lambda: f64,
    pub model: JointSizeModel,
    pub policy: Policy,
    /// Arrivals generated per replication; the run drains to completion.
    pub jobs_per_replication: usize,
    /// Completions (and arrival-epoch work samples) discarded as warmup.
    pub warmup_jobs: usize,
    pub replications: usize,
    pub base_seed: u64,
    /// Predicates whose mean system work is sampled at arrival epochs.
    pub work_probes: Vec<WorkPredicate>,
    /// Keep per-job records (arrival, first service, completion).
    #[serde(skip)]
    pub record_jobs: bool,
    /// Abort threshold on jobs in system; defaults to [`SYSTEM_SIZE_CAP`].
    #[serde(skip)]
    pub system_size_cap: usize,
}

impl SimConfig {
    /// Config with defaults: 200k jobs per replication, 10% warmup,
    /// 5 replications.
    pub fn new(lambda: f64, model: JointSizeModel, policy: Policy) -> Self {
        let jobs = 200_000;
        SimConfig {
            lambda,
            model,
            policy,
            jobs_per_replication: jobs,
            warmup_jobs: jobs / 10,
            replications: 5,
            base_seed: 1,
            work_probes: Vec::new(),
            record_jobs: false,
            system_size_cap: SYSTEM_SIZE_CAP,
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs_per_replication = jobs;
        self.warmup_jobs = jobs / 10;
        self
    }

    pub fn with_replications(mut self, reps: usize) -> Self {
        self.replications = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn rho(&self) -> f64 {
        self.lambda * self.model.size.mean()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return Err(SimError::BadConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        let rho = self.rho();
        if rho.is_nan() || rho >= 1.0 {
            return Err(SimError::Unstable {
                rho,
                lambda: self.lambda,
                mean_size: self.model.size.mean(),
            });
        }
        if self.jobs_per_replication == 0 {
            return Err(SimError::BadConfig(
                "jobs_per_replication must be positive".into(),
            ));
        }
        if self.warmup_jobs >= self.jobs_per_replication {
            return Err(SimError::BadConfig(format!(
                "warmup_jobs {} must be below jobs_per_replication {}",
                self.warmup_jobs, self.jobs_per_replication
            )));
        }
        if self.replications == 0 {
            return Err(SimError::BadConfig("replications must be positive".into()));
        }
        Ok(())
    }
}

/// One arrival: absolute time plus the sampled `(s, z)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: f64,
    pub size: f64,
    pub estimate: f64,
}

/// Completed-job accounting. Waiting and residence times partition response
/// time exactly: `response = waiting + residence`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JobRecord {
    pub arrival_time: f64,
    pub size: f64,
    pub estimate: f64,
    pub first_service_time: f64,
    pub completion_time: f64,
}

impl JobRecord {
    pub fn response(&self) -> f64 {
        self.completion_time - self.arrival_time
    }

    pub fn waiting(&self) -> f64 {
        self.first_service_time - self.arrival_time
    }

    pub fn residence(&self) -> f64 {
        self.completion_time - self.first_service_time
    }
}

/// Statistics from a single replication.
#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub counted_jobs: usize,
    pub mean_response: f64,
    pub mean_waiting: f64,
    pub mean_residence: f64,
    /// Fraction of time the server was busy up to the last arrival.
    pub busy_fraction: f64,
    /// Mean sampled work per probe, aligned with `SimConfig::work_probes`.
    pub phi_work_means: Vec<f64>,
    /// Times an incomplete serving job lost the server.
    pub preemptions: u64,
    /// Crossing handovers received by a partially served job. Under the
    /// capped bounce policy the receiver is expected to be a fresh job.
    pub aged_crossing_receivers: u64,
    pub records: Option<Vec<JobRecord>>,
}

/// Replication-aggregated results.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub policy: Policy,
    pub lambda: f64,
    pub rho: f64,
    pub replications: usize,
    pub jobs_per_replication: usize,
    pub mean_response: Estimate,
    pub mean_waiting: Estimate,
    pub mean_residence: Estimate,
    pub busy_fraction: Estimate,
    pub phi_work: Vec<(WorkPredicate, Estimate)>,
    pub preemptions: u64,
    pub aged_crossing_receivers: u64,
}

/// Deterministic per-replication seed derivation.
pub fn replication_seed(base_seed: u64, replication: usize) -> u64 {
    // SplitMix64 finalizer over a golden-ratio sequence.
    let mut x =
        base_seed.wrapping_add((replication as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

struct LiveJob {
    arrival: f64,
    size: f64,
    estimate: f64,
    age: f64,
    first_service: Option<f64>,
}

impl LiveJob {
    fn state(&self) -> JobState {
        JobState {
            size: self.size,
            estimate: self.estimate,
            age: self.age,
        }
    }
}

/// Queued job keyed for min-first extraction: rank, then arrival (FCFS),
/// then an insertion sequence number for full determinism.
struct QueueEntry {
    rank: f64,
    seq: u64,
    job: LiveJob,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    // Inverted so that BinaryHeap (a max-heap) pops the least entry.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .rank
            .total_cmp(&self.rank)
            .then(other.job.arrival.total_cmp(&self.job.arrival))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Queue {
    /// Jobs whose rank will not increase if served next (fresh, descending,
    /// or capped). Only these can terminate a serving job's rank climb.
    holding: BinaryHeap<QueueEntry>,
    /// Jobs frozen mid-climb; serving one immediately continues the climb.
    rising: BinaryHeap<QueueEntry>,
    seq: u64,
}

impl Queue {
    fn new() -> Self {
        Queue {
            holding: BinaryHeap::new(),
            rising: BinaryHeap::new(),
            seq: 0,
        }
    }

    fn len(&self) -> usize {
        self.holding.len() + self.rising.len()
    }

    fn push(&mut self, policy: Policy, job: LiveJob) {
        let rank = policy.rank(job.state());
        self.push_at(policy, job, rank);
    }

    /// Freeze a job at an explicit rank. Used at crossings, where the
    /// displaced job's rank equals the queued threshold by construction;
    /// recomputing it from the advanced age can land one ulp below the
    /// threshold and make selection hand the server straight back.
    fn push_at(&mut self, policy: Policy, job: LiveJob, rank: f64) {
        let state = job.state();
        let entry = QueueEntry {
            rank,
            seq: self.seq,
            job,
        };
        self.seq += 1;
        if policy.rank_slope(state) > 0.0 {
            self.rising.push(entry);
        } else {
            self.holding.push(entry);
        }
    }

    /// Least frozen rank among jobs that would hold that rank when served.
    fn holding_min_rank(&self) -> Option<f64> {
        self.holding.peek().map(|e| e.rank)
    }

    /// Remove and return the best queued job: least rank, holders before
    /// equal-rank risers, FCFS within a class.
    fn pop_best(&mut self) -> Option<LiveJob> {
        let take_holder = match (self.holding.peek(), self.rising.peek()) {
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => return None,
            (Some(h), Some(r)) => h.rank <= r.rank,
        };
        let entry = if take_holder {
            self.holding.pop().unwrap()
        } else {
            self.rising.pop().unwrap()
        };
        Some(entry.job)
    }

    fn iter_states(&self) -> impl Iterator<Item = JobState> + '_ {
        self.holding
            .iter()
            .map(|e| e.job.state())
            .chain(self.rising.iter().map(|e| e.job.state()))
    }
}

/// Engine parameters independent of the arrival process.
pub struct EngineParams<'a> {
    pub policy: Policy,
    pub warmup_jobs: usize,
    pub work_probes: &'a [WorkPredicate],
    pub record_jobs: bool,
    pub lambda: f64,
    pub system_size_cap: usize,
}

/// Run the scheduler over an explicit arrival sequence. Exposed separately
/// from the Poisson driver so deterministic traces can be tested directly.
pub fn run_arrival_sequence<I>(
    params: &EngineParams,
    arrivals: I,
) -> Result<ReplicationOutput, SimError>
where
    I: IntoIterator<Item = Arrival>,
{
    let policy = params.policy;
    let probes = params.work_probes;
    let mut arrivals = arrivals.into_iter().peekable();

    let mut queue = Queue::new();
    let mut serving: Option<LiveJob> = None;

    let mut t = 0.0f64;
    let mut busy_time = 0.0f64;
    let mut busy_at_last_arrival = 0.0f64;
    let mut last_arrival_time = 0.0f64;

    let mut arrivals_seen = 0usize;
    let mut completions = 0usize;
    let mut resp_sum = 0.0f64;
    let mut wait_sum = 0.0f64;
    let mut res_sum = 0.0f64;
    let mut counted = 0usize;

    let mut phi_sums = vec![0.0f64; probes.len()];
    let mut phi_samples = 0u64;
    // Fast path for a pure remaining-size threshold grid.
    let remsize_grid: Option<Vec<f64>> = if probes.len() >= 8
        && probes
            .iter()
            .all(|p| matches!(p, WorkPredicate::RemsizeLe(_)))
    {
        let mut g: Vec<f64> = probes.iter().map(|p| p.threshold()).collect();
        if g.windows(2).all(|w| w[0] <= w[1]) {
            Some(g)
        } else {
            g.clear();
            None
        }
    } else {
        None
    };
    let mut remaining_scratch: Vec<f64> = Vec::new();

    let mut preemptions = 0u64;
    let mut aged_crossing_receivers = 0u64;

    let mut records: Option<Vec<JobRecord>> = if params.record_jobs {
        Some(Vec::new())
    } else {
        None
    };

    loop {
        if serving.is_none() {
            if let Some(mut job) = queue.pop_best() {
                job.first_service.get_or_insert(t);
                serving = Some(job);
            }
        }

        let next_arrival_time = arrivals.peek().map(|a| a.time).unwrap_or(f64::INFINITY);
        if serving.is_none() && next_arrival_time.is_infinite() {
            break;
        }

        let (dt_complete, dt_cross) = match &serving {
            Some(job) => {
                let dt_complete = job.size - job.age;
                let dt_cross = match queue.holding_min_rank() {
                    Some(threshold) => policy
                        .service_until_rank_exceeds(job.state(), threshold)
                        .unwrap_or(f64::INFINITY),
                    None => f64::INFINITY,
                };
                (dt_complete, dt_cross)
            }
            None => (f64::INFINITY, f64::INFINITY),
        };
        let dt_arrival = next_arrival_time - t;
        let dt = dt_complete.min(dt_cross).min(dt_arrival);
        debug_assert!(dt >= 0.0, "time went backwards: dt = {dt}");

        // Advance the clock and the serving job's age.
        t += dt;
        if let Some(job) = serving.as_mut() {
            job.age += dt;
            busy_time += dt;
        }

        if dt_complete <= dt_cross && dt_complete <= dt_arrival {
            // Completion.
            let job = serving.take().unwrap();
            completions += 1;
            let record = JobRecord {
                arrival_time: job.arrival,
                size: job.size,
                estimate: job.estimate,
                first_service_time: job.first_service.unwrap(),
                completion_time: t,
            };
            if completions > params.warmup_jobs {
                counted += 1;
                resp_sum += record.response();
                wait_sum += record.waiting();
                res_sum += record.residence();
            }
            if let Some(recs) = records.as_mut() {
                recs.push(record);
            }
        } else if dt_cross <= dt_arrival {
            // The serving job's rank is about to strictly exceed the best
            // held queued rank; freeze it and hand the server over. Its
            // frozen rank is the threshold itself (that is what a crossing
            // means), never the recomputed rank, which can differ by an ulp.
            let threshold = queue
                .holding_min_rank()
                .expect("crossing implies a held job");
            let mut job = serving.take().unwrap();
            job.age = job.age.min(job.size * (1.0 - f64::EPSILON)); // guard fp overshoot
            let frozen = policy.rank(job.state()).max(threshold);
            preemptions += 1;
            queue.push_at(policy, job, frozen);
            let mut next = queue.pop_best().expect("crossing implies a queued job");
            if next.age > 0.0 {
                aged_crossing_receivers += 1;
            }
            next.first_service.get_or_insert(t);
            serving = Some(next);
        } else {
            // Arrival. Snap the clock to the arrival's own timestamp: the
            // incremental advance can round an ulp past it, and a later
            // near-zero interarrival gap must not produce a negative step.
            let arrival = arrivals.next().unwrap();
            t = arrival.time;
            arrivals_seen += 1;
            last_arrival_time = t;
            busy_at_last_arrival = busy_time;

            // Sample predicate-restricted work before inserting the arrival:
            // the arriving job observes the system it finds.
            if !probes.is_empty() && arrivals_seen > params.warmup_jobs {
                phi_samples += 1;
                if let Some(grid) = &remsize_grid {
                    remaining_scratch.clear();
                    if let Some(job) = &serving {
                        remaining_scratch.push(job.size - job.age);
                    }
                    remaining_scratch.extend(queue.iter_states().map(|s| s.remaining()));
                    remaining_scratch.sort_by(f64::total_cmp);
                    let mut acc = 0.0;
                    let mut idx = 0;
                    for (gi, &r) in grid.iter().enumerate() {
                        while idx < remaining_scratch.len() && remaining_scratch[idx] <= r {
                            acc += remaining_scratch[idx];
                            idx += 1;
                        }
                        phi_sums[gi] += acc;
                    }
                } else {
                    for (pi, probe) in probes.iter().enumerate() {
                        let mut total = 0.0;
                        if let Some(job) = &serving {
                            total += crate::work::phi_work_of_job(job.state(), *probe);
                        }
                        total += system_phi_work(queue.iter_states(), *probe);
                        phi_sums[pi] += total;
                    }
                }
            }

            let new_job = LiveJob {
                arrival: arrival.time,
                size: arrival.size,
                estimate: arrival.estimate,
                age: 0.0,
                first_service: None,
            };
            let new_rank = policy.rank(new_job.state());
            let preempt = match &serving {
                Some(job) => new_rank < policy.rank(job.state()),
                None => false,
            };
            if preempt {
                let job = serving.take().unwrap();
                preemptions += 1;
                queue.push(policy, job);
                let mut job = new_job;
                job.first_service = Some(t);
                serving = Some(job);
            } else {
                queue.push(policy, new_job);
            }

            if queue.len() + serving.is_some() as usize > params.system_size_cap {
                return Err(SimError::SystemSizeExceeded {
                    policy: policy.name(),
                    lambda: params.lambda,
                    cap: params.system_size_cap,
                });
            }
        }
    }

    let n = counted.max(1) as f64;
    Ok(ReplicationOutput {
        counted_jobs: counted,
        mean_response: resp_sum / n,
        mean_waiting: wait_sum / n,
        mean_residence: res_sum / n,
        busy_fraction: if last_arrival_time > 0.0 {
            busy_at_last_arrival / last_arrival_time
        } else {
            0.0
        },
        phi_work_means: phi_sums
            .iter()
            .map(|s| {
                if phi_samples > 0 {
                    s / phi_samples as f64
                } else {
                    0.0
                }
            })
            .collect(),
        preemptions,
        aged_crossing_receivers,
        records,
    })
}

struct PoissonArrivals {
    rng: ChaCha8Rng,
    model: JointSizeModel,
    lambda: f64,
    t: f64,
    remaining: usize,
}

impl Iterator for PoissonArrivals {
    type Item = Arrival;

    fn next(&mut self) -> Option<Arrival> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let u: f64 = self.rng.random();
        self.t += -(-u).ln_1p() / self.lambda;
        let (size, estimate) = self.model.sample(&mut self.rng);
        Some(Arrival {
            time: self.t,
            size,
            estimate,
        })
    }
}

/// Simulate one replication with the given seed.
pub fn run_replication(cfg: &SimConfig, seed: u64) -> Result<ReplicationOutput, SimError> {
    cfg.validate()?;
    let arrivals = PoissonArrivals {
        rng: ChaCha8Rng::seed_from_u64(seed),
        model: cfg.model.clone(),
        lambda: cfg.lambda,
        t: 0.0,
        remaining: cfg.jobs_per_replication,
    };
    let params = EngineParams {
        policy: cfg.policy,
        warmup_jobs: cfg.warmup_jobs,
        work_probes: &cfg.work_probes,
        record_jobs: cfg.record_jobs,
        lambda: cfg.lambda,
        system_size_cap: cfg.system_size_cap,
    };
    run_arrival_sequence(&params, arrivals)
}

/// Aggregate replication outputs into means with Student-t confidence
/// half-widths.
pub fn summarize(cfg: &SimConfig, outputs: &[ReplicationOutput]) -> RunSummary {
    let collect = |f: &dyn Fn(&ReplicationOutput) -> f64| -> Estimate {
        Estimate::from_replications(&outputs.iter().map(f).collect::<Vec<_>>())
    };
    let phi_work = cfg
        .work_probes
        .iter()
        .enumerate()
        .map(|(i, probe)| {
            let vals: Vec<f64> = outputs.iter().map(|o| o.phi_work_means[i]).collect();
            (*probe, Estimate::from_replications(&vals))
        })
        .collect();
    RunSummary {
        policy: cfg.policy,
        lambda: cfg.lambda,
        rho: cfg.rho(),
        replications: outputs.len(),
        jobs_per_replication: cfg.jobs_per_replication,
        mean_response: collect(&|o| o.mean_response),
        mean_waiting: collect(&|o| o.mean_waiting),
        mean_residence: collect(&|o| o.mean_residence),
        busy_fraction: collect(&|o| o.busy_fraction),
        phi_work,
        preemptions: outputs.iter().map(|o| o.preemptions).sum(),
        aged_crossing_receivers: outputs.iter().map(|o| o.aged_crossing_receivers).sum(),
    }
}

/// Run all replications (in parallel, with independent deterministic
/// streams) and aggregate.
pub fn run(cfg: &SimConfig) -> Result<RunSummary, SimError> {
    cfg.validate()?;
    let outputs: Result<Vec<ReplicationOutput>, SimError> = (0..cfg.replications)
        .into_par_iter()
        .map(|i| run_replication(cfg, replication_seed(cfg.base_seed, i)))
        .collect();
    Ok(summarize(cfg, &outputs?))
}
