use std::collections::HashMap;

use crate::numeral::NumberToken;
use crate::taskgen::{AddInstance, DecodeInstance, ListMaxInstance, Task, LIST_LEN};

/// A dataset flattened for training: distinct tokens plus, per example,
/// `arity` indices into them and a label or regression target.
#[derive(Debug, Clone)]
pub struct ProbeData {
    task: Task,
    tokens: Vec<NumberToken>,
    slots: Vec<usize>,
    labels: Vec<usize>,
    targets: Vec<f64>,
}

#[derive(Default)]
struct Interner {
    tokens: Vec<NumberToken>,
    index: HashMap<String, usize>,
}

impl Interner {
    fn id(&mut self, t: &NumberToken) -> usize {
        if let Some(&i) = self.index.get(t.surface()) {
            return i;
        }
        self.tokens.push(t.clone());
        self.index.insert(t.surface().to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }
}

impl ProbeData {
    pub fn list_max(instances: &[ListMaxInstance]) -> Self {
        let mut intern = Interner::default();
        let mut slots = Vec::with_capacity(instances.len() * LIST_LEN);
        let mut labels = Vec::with_capacity(instances.len());
        for inst in instances {
            assert_eq!(inst.tokens.len(), LIST_LEN, "list-max instances hold five tokens");
            slots.extend(inst.tokens.iter().map(|t| intern.id(t)));
            labels.push(inst.label);
        }
        ProbeData {
            task: Task::ListMax,
            tokens: intern.tokens,
            slots,
            labels,
            targets: Vec::new(),
        }
    }

    pub fn decode(instances: &[DecodeInstance]) -> Self {
        let mut intern = Interner::default();
        let slots = instances.iter().map(|i| intern.id(&i.token)).collect();
        ProbeData {
            task: Task::Decode,
            tokens: intern.tokens,
            slots,
            labels: Vec::new(),
            targets: instances.iter().map(|i| i.target).collect(),
        }
    }

    pub fn add(instances: &[AddInstance]) -> Self {
        let mut intern = Interner::default();
        let mut slots = Vec::with_capacity(instances.len() * 2);
        for i in instances {
            slots.push(intern.id(&i.token_a));
            slots.push(intern.id(&i.token_b));
        }
        ProbeData {
            task: Task::Add,
            tokens: intern.tokens,
            slots,
            labels: Vec::new(),
            targets: instances.iter().map(|i| i.target).collect(),
        }
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn arity(&self) -> usize {
        arity(self.task)
    }

    pub fn len(&self) -> usize {
        self.slots.len() / self.arity()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn tokens(&self) -> &[NumberToken] {
        &self.tokens
    }

    /// Token indices of example `i`.
    pub fn example(&self, i: usize) -> &[usize] {
        let a = self.arity();
        &self.slots[i * a..(i + 1) * a]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }
}

pub fn arity(task: Task) -> usize {
    match task {
        Task::ListMax => LIST_LEN,
        Task::Decode => 1,
        Task::Add => 2,
    }
}
