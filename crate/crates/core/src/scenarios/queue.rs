//! M/M/N queue with join-the-shortest-queue routing. A server's outcome in a
//! period is the time it spends busy during that unit interval.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;
use rand_distr::{Distribution, Exp, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ExperimentDesign, PanelData};
use crate::rng::Streams;
use crate::simulation::{check_assignments, PanelSimulator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    /// Arrival rate per server; the total rate is this times N.
    pub arrival_rate_factor: f64,
    pub base_service_rate: f64,
    pub treated_service_rate: f64,
}

impl Default for QueueParams {
    fn default() -> Self {
        QueueParams {
            arrival_rate_factor: 0.95,
            base_service_rate: 1.0,
            treated_service_rate: 2.0,
        }
    }
}

impl QueueParams {
    pub fn validate(&self) -> Result<()> {
        let QueueParams {
            arrival_rate_factor: a,
            base_service_rate: b,
            treated_service_rate: c,
        } = *self;
        if ![a, b, c].iter().all(|v| v.is_finite()) {
            return Err(Error::param("queue parameters must be finite"));
        }
        if a < 0.0 || b <= 0.0 || c <= 0.0 {
            return Err(Error::param("queue rates must be positive"));
        }
        // Every counterfactual, including the all-control one, must be stable.
        if a >= b.min(c) {
            return Err(Error::param(format!(
                "arrival rate factor {a} is not below the service rates ({b}, {c})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct JsqQueue {
    pub n_servers: usize,
    pub params: QueueParams,
    pub design: ExperimentDesign,
    pub burn_in: usize,
    /// Jobs in the system beyond which the run is declared unstable.
    pub max_jobs: usize,
}

#[derive(Clone, Copy, Debug)]
struct Completion {
    time: f64,
    server: u32,
}

impl PartialEq for Completion {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Completion {}

impl PartialOrd for Completion {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Completion {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.server.cmp(&other.server))
    }
}

/// Servers grouped by queue length, with the shortest non-empty group tracked.
struct LengthBuckets {
    by_len: Vec<Vec<u32>>,
    pos: Vec<usize>,
    len: Vec<usize>,
    min_len: usize,
}

impl LengthBuckets {
    fn new(n: usize) -> Self {
        LengthBuckets {
            by_len: vec![(0..n as u32).collect()],
            pos: (0..n).collect(),
            len: vec![0; n],
            min_len: 0,
        }
    }

    /// Uniformly random server among the shortest queues.
    fn pick(&self, u: f64) -> usize {
        let b = &self.by_len[self.min_len];
        b[((u * b.len() as f64) as usize).min(b.len() - 1)] as usize
    }

    fn relocate(&mut self, s: usize, new_len: usize) {
        let old = self.len[s];
        let bucket = &mut self.by_len[old];
        let p = self.pos[s];
        bucket.swap_remove(p);
        if let Some(&moved) = bucket.get(p) {
            self.pos[moved as usize] = p;
        }
        if self.by_len.len() <= new_len {
            self.by_len.resize_with(new_len + 1, Vec::new);
        }
        self.pos[s] = self.by_len[new_len].len();
        self.by_len[new_len].push(s as u32);
        self.len[s] = new_len;
    }

    fn increment(&mut self, s: usize) {
        self.relocate(s, self.len[s] + 1);
        while self.by_len[self.min_len].is_empty() {
            self.min_len += 1;
        }
    }

    fn decrement(&mut self, s: usize) {
        let l = self.len[s] - 1;
        self.relocate(s, l);
        self.min_len = self.min_len.min(l);
    }
}

impl JsqQueue {
    pub fn new(n_servers: usize, params: QueueParams, design: ExperimentDesign) -> Self {
        JsqQueue {
            n_servers,
            params,
            design,
            burn_in: 0,
            max_jobs: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_servers == 0 {
            return Err(Error::param("queue needs at least one server"));
        }
        self.params.validate()?;
        self.design.validate()
    }

    /// Busy time per server and unit interval over burn-in plus horizon,
    /// laid out as `interval * N + server`.
    pub fn busy_time(&self, streams: &Streams, w: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_servers;
        let horizon = self.design.horizon();
        let periods = self.burn_in + horizon;
        let end = periods as f64;
        let rate_at = |s: usize, now: f64| {
            let period = now.floor() as usize;
            let treated = period >= self.burn_in && {
                let row = (period - self.burn_in).min(horizon - 1);
                w[row * n + s] == 1.0
            };
            if treated {
                self.params.treated_service_rate
            } else {
                self.params.base_service_rate
            }
        };

        let lambda = self.params.arrival_rate_factor * n as f64;
        let mut jobs = streams.rng("jobs");
        let interarrival = (lambda > 0.0).then(|| Exp::new(lambda).expect("positive rate"));
        let mut draw = |now: f64| -> (f64, f64, f64) {
            match &interarrival {
                Some(d) => {
                    let gap = d.sample(&mut jobs);
                    let work: f64 = Exp1.sample(&mut jobs);
                    (now + gap, work, jobs.random::<f64>())
                }
                None => (f64::INFINITY, 0.0, 0.0),
            }
        };

        let mut busy = vec![0.0; periods * n];
        let mut add_span = |s: usize, mut a: f64, b: f64| {
            while a < b {
                let k = a.floor() as usize;
                if k >= periods {
                    break;
                }
                let stop = b.min((k + 1) as f64);
                busy[k * n + s] += stop - a;
                a = stop;
            }
        };

        let mut buckets = LengthBuckets::new(n);
        let mut waiting: Vec<VecDeque<f64>> = vec![VecDeque::new(); n];
        let mut busy_since: Vec<Option<f64>> = vec![None; n];
        let mut heap: BinaryHeap<Reverse<Completion>> = BinaryHeap::new();
        let mut in_system = 0usize;
        let (mut next_arrival, mut work, mut tie) = draw(0.0);

        loop {
            let next_done = heap.peek().map_or(f64::INFINITY, |c| c.0.time);
            if next_arrival <= next_done {
                if next_arrival >= end {
                    break;
                }
                let now = next_arrival;
                let s = buckets.pick(tie);
                buckets.increment(s);
                in_system += 1;
                if in_system > self.max_jobs {
                    return Err(Error::Unstable(format!(
                        "{in_system} jobs in the system at time {now:.3}"
                    )));
                }
                if busy_since[s].is_none() {
                    busy_since[s] = Some(now);
                    heap.push(Reverse(Completion {
                        time: now + work / rate_at(s, now),
                        server: s as u32,
                    }));
                } else {
                    waiting[s].push_back(work);
                }
                (next_arrival, work, tie) = draw(now);
            } else {
                if next_done >= end {
                    break;
                }
                let Reverse(done) = heap.pop().expect("peeked");
                let (now, s) = (done.time, done.server as usize);
                buckets.decrement(s);
                in_system -= 1;
                match waiting[s].pop_front() {
                    Some(job) => heap.push(Reverse(Completion {
                        time: now + job / rate_at(s, now),
                        server: s as u32,
                    })),
                    None => {
                        add_span(s, busy_since[s].take().expect("server was busy"), now);
                    }
                }
            }
        }
        for (s, since) in busy_since.iter().enumerate() {
            if let Some(a) = *since {
                add_span(s, a, end);
            }
        }
        for b in &mut busy {
            *b = b.clamp(0.0, 1.0);
        }
        Ok(busy)
    }
}

impl PanelSimulator for JsqQueue {
    fn n_units(&self) -> usize {
        self.n_servers
    }

    fn design(&self) -> &ExperimentDesign {
        &self.design
    }

    /// Each run replays the same job sequence (arrival times, unit-rate work,
    /// tie-break draws) under its own treatment matrix.
    fn simulate_coupled(&self, streams: &Streams, assignments: &[&[f64]]) -> Result<Vec<PanelData>> {
        self.validate()?;
        let n = self.n_servers;
        check_assignments(&self.design, n, assignments)?;
        let horizon = self.design.horizon();
        assignments
            .iter()
            .map(|w| {
                let busy = self.busy_time(streams, w)?;
                let mut outcomes = vec![0.0; n * (horizon + 1)];
                if self.burn_in > 0 {
                    let first = (self.burn_in - 1) * n;
                    outcomes[..n].copy_from_slice(&busy[first..first + n]);
                }
                let from = self.burn_in * n;
                outcomes[n..].copy_from_slice(&busy[from..from + horizon * n]);
                PanelData::new(n, horizon, outcomes, w.to_vec())
            })
            .collect()
    }
}
