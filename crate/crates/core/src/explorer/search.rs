//! Schedule search: exhaustive DFS with state hashing, unpruned enumeration,
//! seeded random runs and replay.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::lang::{Program, StatementId};

use super::machine::{Fault, Machine, Outcome, State, Status, Value};
use super::trace::{Trace, TraceEvent, Verdict};
use super::{ExplorerError, Schedule};

pub const DEFAULT_DEPTH_BOUND: usize = 10_000;
pub const DEFAULT_RUNS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreOptions {
    pub depth_bound: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { depth_bound: DEFAULT_DEPTH_BOUND }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Stats {
    /// Maximal paths examined, including ones cut short by a revisited state.
    pub schedules: u64,
    pub states: u64,
    /// Some schedule reached the depth bound, so coverage is incomplete.
    pub partial: bool,
}

/// Where one thread stands in a final or failing state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ThreadSnapshot {
    pub thread: usize,
    pub status: String,
    /// Current statement of each frame, outermost first.
    pub stack: Vec<StatementId>,
    pub holding: Vec<String>,
}

pub type GlobalStore = Vec<(String, Value)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionResult {
    pub verdict: Verdict,
    pub failing_schedule: Option<Schedule>,
    /// The failing execution, or for a clean result the first complete one.
    pub trace: Trace,
    pub fault: Option<Fault>,
    pub threads: Vec<ThreadSnapshot>,
    /// Spawn-site chain of each dynamic thread in `trace`.
    pub thread_chains: Vec<Vec<StatementId>>,
    /// Distinct global stores at successful termination.
    pub final_states: BTreeSet<GlobalStore>,
    pub stats: Stats,
}

impl DetectionResult {
    pub fn blocked(&self) -> Vec<&ThreadSnapshot> {
        self.threads.iter().filter(|t| t.status != "done").collect()
    }

    fn build(
        m: &Machine,
        verdict: Verdict,
        schedule: Schedule,
        events: Vec<TraceEvent>,
        s: &State,
        stats: Stats,
        final_states: BTreeSet<GlobalStore>,
    ) -> Self {
        DetectionResult {
            verdict,
            failing_schedule: verdict.is_failure().then(|| schedule.clone()),
            trace: Trace { verdict, schedule, events },
            fault: s.fault.clone(),
            threads: snapshot(m, s),
            thread_chains: s.threads.iter().map(|t| m.chain(t.chain)).collect(),
            final_states,
            stats,
        }
    }
}

fn snapshot(m: &Machine, s: &State) -> Vec<ThreadSnapshot> {
    let c = &m.compiled;
    s.threads
        .iter()
        .enumerate()
        .map(|(tid, t)| {
            let n = t.frames.len();
            let stack = t
                .frames
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let at_current = i + 1 == n && matches!(t.status, Status::Running);
                    let pc = if at_current { f.pc } else { f.pc.saturating_sub(1) };
                    m.sid(f.code, c.codes[f.code].instrs[pc].1)
                })
                .collect();
            let status = match t.status {
                Status::Done => "done".to_string(),
                Status::Waiting { cond, .. } => format!("waiting on `{}`", c.conds[cond]),
                Status::Reacquiring { lock, .. } => format!("reacquiring `{}` after wait", c.locks[lock]),
                Status::Running => {
                    let f = t.frames.last().expect("running thread has a frame");
                    match &c.codes[f.code].instrs[f.pc].0 {
                        super::compile::Instr::Acquire(l) => match s.locks[*l].owner {
                            Some(o) if o != tid => format!("blocked acquiring `{}` held by thread {o}", c.locks[*l]),
                            _ => "runnable".to_string(),
                        },
                        super::compile::Instr::Join(h) => match f.handles[*h] {
                            Some(child) if s.threads[child].status != Status::Done => {
                                format!("blocked joining thread {child}")
                            }
                            _ => "runnable".to_string(),
                        },
                        _ => "runnable".to_string(),
                    }
                }
            };
            let holding = s
                .locks
                .iter()
                .enumerate()
                .filter(|(_, l)| l.owner == Some(tid))
                .map(|(i, _)| c.locks[i].clone())
                .collect();
            ThreadSnapshot { thread: tid, status, stack, holding }
        })
        .collect()
}

fn failure_verdict(o: Outcome) -> Option<Verdict> {
    match o {
        Outcome::Fault => Some(Verdict::AssertionFailure),
        Outcome::Deadlock => Some(Verdict::Deadlock),
        Outcome::Running | Outcome::Finished => None,
    }
}

struct Node {
    state: State,
    choices: Vec<usize>,
    next: usize,
    events_len: usize,
}

/// Depth-first search over all schedules, lowest thread id first, pruning
/// states already seen. Returns the first failure found.
pub fn explore(p: &Program, opts: ExploreOptions) -> DetectionResult {
    let m = Machine::new(p);
    let mut events = Vec::new();
    let s0 = m.initial(&mut events);
    let mut stats = Stats { schedules: 0, states: 1, partial: false };
    let mut finals = BTreeSet::new();
    if let Some(v) = failure_verdict(m.outcome(&s0)) {
        stats.schedules = 1;
        return DetectionResult::build(&m, v, Vec::new(), events, &s0, stats, finals);
    }
    let mut first: Option<(Schedule, Vec<TraceEvent>, State)> = None;
    let fallback = (Vec::new(), events.clone(), s0.clone());
    if m.outcome(&s0) == Outcome::Finished {
        stats.schedules = 1;
        finals.insert(m.globals(&s0));
        return DetectionResult::build(&m, Verdict::NoBugFound, Vec::new(), events, &s0, stats, finals);
    }
    let mut visited: HashSet<State> = HashSet::from([s0.clone()]);
    let mut schedule: Schedule = Vec::new();
    let mut stack = vec![Node { choices: m.runnable(&s0), state: s0, next: 0, events_len: events.len() }];

    while let Some(top) = stack.last_mut() {
        if top.next >= top.choices.len() {
            stack.pop();
            schedule.pop();
            continue;
        }
        let tid = top.choices[top.next];
        top.next += 1;
        let mut s = top.state.clone();
        let events_len = top.events_len;
        let depth = stack.len();
        events.truncate(events_len);
        schedule.truncate(depth - 1);
        schedule.push(tid);
        m.step(&mut s, tid, &mut events);

        let outcome = m.outcome(&s);
        if let Some(v) = failure_verdict(outcome) {
            stats.schedules += 1;
            stats.states += 1;
            return DetectionResult::build(&m, v, schedule, events, &s, stats, finals);
        }
        if outcome == Outcome::Finished {
            stats.schedules += 1;
            finals.insert(m.globals(&s));
            if first.is_none() {
                first = Some((schedule.clone(), events.clone(), s));
            }
            continue;
        }
        if schedule.len() >= opts.depth_bound {
            stats.schedules += 1;
            stats.partial = true;
            continue;
        }
        if !visited.insert(s.clone()) {
            stats.schedules += 1;
            continue;
        }
        stats.states += 1;
        let choices = m.runnable(&s);
        stack.push(Node { state: s, choices, next: 0, events_len: events.len() });
    }
    let (schedule, events, s) = first.unwrap_or(fallback);
    DetectionResult::build(&m, Verdict::NoBugFound, schedule, events, &s, stats, finals)
}

/// One complete execution seen by [`enumerate`].
#[derive(Debug, Clone)]
pub struct Execution {
    pub verdict: Verdict,
    pub schedule: Schedule,
    pub events: Vec<TraceEvent>,
    pub final_globals: GlobalStore,
    pub thread_chains: Vec<Vec<StatementId>>,
}

/// Visits every complete schedule without pruning. Fails once more than
/// `max_schedules` executions have been seen.
pub fn enumerate(
    p: &Program,
    opts: ExploreOptions,
    max_schedules: usize,
    mut visit: impl FnMut(&Execution),
) -> Result<usize, ExplorerError> {
    let m = Machine::new(p);
    let mut events = Vec::new();
    let s0 = m.initial(&mut events);
    let mut count = 0usize;
    let mut emit = |m: &Machine, s: &State, schedule: &Schedule, events: &Vec<TraceEvent>, count: &mut usize| {
        let verdict = failure_verdict(m.outcome(s)).unwrap_or(Verdict::NoBugFound);
        *count += 1;
        visit(&Execution {
            verdict,
            schedule: schedule.clone(),
            events: events.clone(),
            final_globals: m.globals(s),
            thread_chains: s.threads.iter().map(|t| m.chain(t.chain)).collect(),
        });
    };
    if m.outcome(&s0) != Outcome::Running {
        emit(&m, &s0, &Vec::new(), &events, &mut count);
        return Ok(count);
    }
    let mut schedule: Schedule = Vec::new();
    let mut stack = vec![Node { choices: m.runnable(&s0), state: s0, next: 0, events_len: events.len() }];
    while let Some(top) = stack.last_mut() {
        if top.next >= top.choices.len() {
            stack.pop();
            schedule.pop();
            continue;
        }
        let tid = top.choices[top.next];
        top.next += 1;
        let mut s = top.state.clone();
        let events_len = top.events_len;
        let depth = stack.len();
        events.truncate(events_len);
        schedule.truncate(depth - 1);
        schedule.push(tid);
        m.step(&mut s, tid, &mut events);
        if m.outcome(&s) != Outcome::Running || schedule.len() >= opts.depth_bound {
            emit(&m, &s, &schedule, &events, &mut count);
            if count > max_schedules {
                return Err(ExplorerError::TooManySchedules { limit: max_schedules });
            }
            continue;
        }
        let choices = m.runnable(&s);
        stack.push(Node { state: s, choices, next: 0, events_len: events.len() });
    }
    Ok(count)
}

/// `runs` complete executions with uniformly random scheduling choices.
pub fn run_random(p: &Program, runs: usize, seed: u64, opts: ExploreOptions) -> DetectionResult {
    let m = Machine::new(p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Stats::default();
    let mut finals = BTreeSet::new();
    let mut first = None;
    for _ in 0..runs {
        let mut events = Vec::new();
        let mut s = m.initial(&mut events);
        let mut schedule = Vec::new();
        stats.schedules += 1;
        loop {
            match m.outcome(&s) {
                Outcome::Running if schedule.len() >= opts.depth_bound => {
                    stats.partial = true;
                    break;
                }
                Outcome::Running => {
                    let choices = m.runnable(&s);
                    let tid = choices[rng.gen_range(0..choices.len())];
                    schedule.push(tid);
                    m.step(&mut s, tid, &mut events);
                    stats.states += 1;
                }
                Outcome::Finished => {
                    finals.insert(m.globals(&s));
                    if first.is_none() {
                        first = Some((schedule.clone(), events.clone(), s.clone()));
                    }
                    break;
                }
                o => {
                    let v = failure_verdict(o).expect("failing outcome");
                    return DetectionResult::build(&m, v, schedule, events, &s, stats, finals);
                }
            }
        }
    }
    match first {
        Some((schedule, events, s)) => DetectionResult::build(&m, Verdict::NoBugFound, schedule, events, &s, stats, finals),
        None => {
            let mut events = Vec::new();
            let s = m.initial(&mut events);
            DetectionResult::build(&m, Verdict::NoBugFound, Vec::new(), events, &s, stats, finals)
        }
    }
}

/// Re-executes a schedule, then finishes the run lowest thread id first.
pub fn replay(p: &Program, schedule: &[usize], opts: ExploreOptions) -> Result<DetectionResult, ExplorerError> {
    let m = Machine::new(p);
    let mut events = Vec::new();
    let mut s = m.initial(&mut events);
    let mut done = Vec::new();
    for (index, &tid) in schedule.iter().enumerate() {
        if tid >= s.threads.len() || !m.is_runnable(&s, tid) {
            return Err(ExplorerError::InvalidSchedule { index, thread: tid });
        }
        done.push(tid);
        m.step(&mut s, tid, &mut events);
    }
    let mut stats = Stats { schedules: 1, states: done.len() as u64 + 1, partial: false };
    while m.outcome(&s) == Outcome::Running {
        if done.len() >= opts.depth_bound {
            stats.partial = true;
            break;
        }
        let tid = m.runnable(&s)[0];
        done.push(tid);
        m.step(&mut s, tid, &mut events);
        stats.states += 1;
    }
    let outcome = m.outcome(&s);
    let verdict = failure_verdict(outcome).unwrap_or(Verdict::NoBugFound);
    let mut finals = BTreeSet::new();
    if outcome == Outcome::Finished {
        finals.insert(m.globals(&s));
    }
    Ok(DetectionResult::build(&m, verdict, done, events, &s, stats, finals))
}
