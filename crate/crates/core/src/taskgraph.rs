//! Expansion of training jobs into shard-task dependency graphs.
//!
//! For model `m` with `S` shards and a global minibatch counter `b` that
//! flattens `(epoch, minibatch)`:
//!
//! - `Fwd(m, s, b)` waits for `Fwd(m, s-1, b)`;
//! - `Bwd(m, s, b)` waits for `Bwd(m, s+1, b)`, or for `Fwd(m, S-1, b)` on the
//!   last shard;
//! - `Bwd(m, s, b)` waits for `Fwd(m, s, b)` (its stashed activations);
//! - `Fwd(m, s, b)` waits for `Bwd(m, s, b-1)` (updated weights).
//!
//! The last rule makes every model's tasks a single chain: exact sequential
//! SGD, with all parallelism coming from interleaving different models.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::exact::Exact;
use crate::workload::WorkloadSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fwd,
    Bwd,
}

/// One forward or backward pass of one shard on one minibatch.
///
/// Ordering is the canonical priority key
/// `(epoch, minibatch, model, direction, shard)` with `Fwd < Bwd`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskId {
    pub model: u32,
    pub shard: u32,
    pub epoch: u32,
    pub minibatch: u32,
    pub direction: Direction,
}

impl TaskId {
    pub fn fwd(model: u32, shard: u32, epoch: u32, minibatch: u32) -> Self {
        Self {
            model,
            shard,
            epoch,
            minibatch,
            direction: Direction::Fwd,
        }
    }

    pub fn bwd(model: u32, shard: u32, epoch: u32, minibatch: u32) -> Self {
        Self {
            direction: Direction::Bwd,
            ..Self::fwd(model, shard, epoch, minibatch)
        }
    }

    /// The forward task whose activations this backward task consumes.
    pub fn matching_fwd(&self) -> Option<TaskId> {
        (self.direction == Direction::Bwd).then_some(TaskId {
            direction: Direction::Fwd,
            ..*self
        })
    }

    fn key(&self) -> (u32, u32, u32, Direction, u32) {
        (
            self.epoch,
            self.minibatch,
            self.model,
            self.direction,
            self.shard,
        )
    }
}

impl Ord for TaskId {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for TaskId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = match self.direction {
            Direction::Fwd => "Fwd",
            Direction::Bwd => "Bwd",
        };
        write!(
            f,
            "{dir}(m{}, s{}, e{}, b{})",
            self.model, self.shard, self.epoch, self.minibatch
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub id: TaskId,
    /// Time at speed 1.
    pub cost: Exact,
    pub working_set: Exact,
    pub deps: Vec<TaskId>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("task {0} is not part of the graph")]
    UnknownTask(TaskId),
    #[error("completed set is not dependency-closed: {task} completed before {missing}")]
    NotDependencyClosed { task: TaskId, missing: TaskId },
}

#[derive(Debug, Clone)]
pub struct TaskGraph {
    tasks: Vec<Task>,
    index: HashMap<TaskId, usize>,
    dependents: Vec<Vec<usize>>,
    per_model: BTreeMap<u32, Vec<usize>>,
    acyclic: bool,
}

impl TaskGraph {
    /// Builds the graph for every model of `spec`. Tasks are stored model by
    /// model, each model's tasks in chain order.
    pub fn expand(spec: &WorkloadSpec) -> Self {
        let mut tasks = Vec::new();
        let mut per_model = BTreeMap::new();
        for model in &spec.models {
            let s_count = model.shards.len() as u32;
            let per_epoch = model.minibatches_per_epoch;
            let coords = |b: u32| (b / per_epoch, b % per_epoch);
            let mut chain = Vec::new();
            for b in 0..model.total_minibatches() {
                let (e, mb) = coords(b);
                for s in 0..s_count {
                    let mut deps = Vec::with_capacity(2);
                    if s > 0 {
                        deps.push(TaskId::fwd(model.id, s - 1, e, mb));
                    }
                    if b > 0 {
                        let (pe, pmb) = coords(b - 1);
                        deps.push(TaskId::bwd(model.id, s, pe, pmb));
                    }
                    let shard = &model.shards[s as usize];
                    chain.push(tasks.len());
                    tasks.push(Task {
                        id: TaskId::fwd(model.id, s, e, mb),
                        cost: shard.fwd_cost,
                        working_set: shard.working_set(),
                        deps,
                    });
                }
                for s in (0..s_count).rev() {
                    let mut deps = Vec::with_capacity(2);
                    if s + 1 < s_count {
                        deps.push(TaskId::bwd(model.id, s + 1, e, mb));
                    }
                    deps.push(TaskId::fwd(model.id, s, e, mb));
                    let shard = &model.shards[s as usize];
                    chain.push(tasks.len());
                    tasks.push(Task {
                        id: TaskId::bwd(model.id, s, e, mb),
                        cost: shard.bwd_cost,
                        working_set: shard.working_set(),
                        deps,
                    });
                }
            }
            per_model.insert(model.id, chain);
        }
        Self::from_tasks(tasks, per_model)
    }

    fn from_tasks(tasks: Vec<Task>, per_model: BTreeMap<u32, Vec<usize>>) -> Self {
        let index: HashMap<TaskId, usize> =
            tasks.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
        let mut dependents = vec![Vec::new(); tasks.len()];
        let mut dangling = false;
        for (i, t) in tasks.iter().enumerate() {
            for d in &t.deps {
                match index.get(d) {
                    Some(&j) => dependents[j].push(i),
                    None => dangling = true,
                }
            }
        }
        let mut graph = Self {
            tasks,
            index,
            dependents,
            per_model,
            acyclic: false,
        };
        graph.acyclic = !dangling && graph.topological_order().is_some();
        graph
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn is_acyclic(&self) -> bool {
        self.acyclic
    }

    pub fn index_of(&self, id: &TaskId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn task(&self, id: &TaskId) -> Option<&Task> {
        self.index_of(id).map(|i| &self.tasks[i])
    }

    /// Indices of tasks that list task `index` as a dependency.
    pub fn dependents(&self, index: usize) -> &[usize] {
        &self.dependents[index]
    }

    pub fn models(&self) -> impl Iterator<Item = u32> + '_ {
        self.per_model.keys().copied()
    }

    /// A model's tasks in chain order.
    pub fn model_tasks(&self, model: u32) -> impl Iterator<Item = &Task> + '_ {
        self.per_model
            .get(&model)
            .into_iter()
            .flatten()
            .map(|&i| &self.tasks[i])
    }

    pub fn sources(&self) -> Vec<TaskId> {
        self.tasks
            .iter()
            .filter(|t| t.deps.is_empty())
            .map(|t| t.id)
            .collect()
    }

    pub fn sinks(&self) -> Vec<TaskId> {
        (0..self.tasks.len())
            .filter(|&i| self.dependents[i].is_empty())
            .map(|i| self.tasks[i].id)
            .collect()
    }

    /// Kahn order, or `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree: Vec<usize> = self
            .tasks
            .iter()
            .map(|t| t.deps.iter().filter(|d| self.index.contains_key(d)).count())
            .collect();
        let mut queue: VecDeque<usize> = (0..self.tasks.len())
            .filter(|&i| indegree[i] == 0)
            .collect();
        let mut order = Vec::with_capacity(self.tasks.len());
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for &j in &self.dependents[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push_back(j);
                }
            }
        }
        (order.len() == self.tasks.len()).then_some(order)
    }

    /// Tasks whose dependencies are all in `completed` and which are not
    /// completed themselves, in canonical priority order.
    pub fn ready_set(&self, completed: &HashSet<TaskId>) -> Result<Vec<TaskId>, GraphError> {
        for id in completed {
            let task = self.task(id).ok_or(GraphError::UnknownTask(*id))?;
            if let Some(missing) = task.deps.iter().find(|d| !completed.contains(d)) {
                return Err(GraphError::NotDependencyClosed {
                    task: *id,
                    missing: *missing,
                });
            }
        }
        let mut ready: Vec<TaskId> = self
            .tasks
            .iter()
            .filter(|t| !completed.contains(&t.id) && t.deps.iter().all(|d| completed.contains(d)))
            .map(|t| t.id)
            .collect();
        ready.sort();
        Ok(ready)
    }

    /// Longest cost-weighted dependency path (speed 1, no communication).
    pub fn critical_path(&self) -> Exact {
        let Some(order) = self.topological_order() else {
            return Exact::ZERO;
        };
        let mut finish = vec![Exact::ZERO; self.tasks.len()];
        for i in order {
            let start = self.tasks[i]
                .deps
                .iter()
                .filter_map(|d| self.index_of(d))
                .map(|j| finish[j])
                .max()
                .unwrap_or(Exact::ZERO);
            finish[i] = start + self.tasks[i].cost;
        }
        finish.into_iter().max().unwrap_or(Exact::ZERO)
    }
}

pub fn expand(spec: &WorkloadSpec) -> TaskGraph {
    TaskGraph::expand(spec)
}
