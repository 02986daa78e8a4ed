use std::collections::VecDeque;
use std::fmt;

/// What a tabu entry forbids: moving `user` back into `cell`, or touching
/// the bandwidth split again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TabuKey {
    User { user: usize, cell: usize },
    Profile,
}

impl TabuKey {
    /// The `(subject, cell)` pair with 1-based labels; the bandwidth split is
    /// subject `K + 1` with cell `0`.
    pub fn labels(&self, users: usize) -> (usize, usize) {
        match *self {
            TabuKey::User { user, cell } => (user + 1, cell + 1),
            TabuKey::Profile => (users + 1, 0),
        }
    }
}

impl fmt::Display for TabuKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TabuKey::User { user, cell } => write!(f, "({}, {})", user + 1, cell + 1),
            TabuKey::Profile => f.write_str("(K+1, 0)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TabuEntry {
    pub key: TabuKey,
    /// First iteration at which the entry no longer blocks.
    pub expires_at: usize,
}

/// Short-term memory: a FIFO of at most `tenure` entries. An entry inserted
/// to take effect at iteration `t` blocks iterations `t .. t + tenure`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabuList {
    tenure: usize,
    entries: VecDeque<TabuEntry>,
}

impl TabuList {
    pub fn new(tenure: usize) -> Self {
        Self {
            tenure,
            entries: VecDeque::with_capacity(tenure + 1),
        }
    }

    pub fn tenure(&self) -> usize {
        self.tenure
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TabuEntry> {
        self.entries.iter()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn push(&mut self, key: TabuKey, effective_from: usize) {
        if self.tenure == 0 {
            return;
        }
        self.entries.push_back(TabuEntry {
            key,
            expires_at: effective_from + self.tenure,
        });
        while self.entries.len() > self.tenure {
            self.entries.pop_front();
        }
    }

    pub fn is_tabu(&self, key: &TabuKey, iteration: usize) -> bool {
        self.entries
            .iter()
            .any(|e| e.key == *key && e.expires_at > iteration)
    }
}

/// Long-term memory: how often each user's association has been changed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityCounts {
    users: Vec<usize>,
    profile: usize,
}

impl ActivityCounts {
    pub fn new(users: usize) -> Self {
        Self {
            users: vec![0; users],
            profile: 0,
        }
    }

    pub fn record_user(&mut self, user: usize) {
        self.users[user] += 1;
    }

    pub fn record_profile(&mut self) {
        self.profile += 1;
    }

    pub fn user_counts(&self) -> &[usize] {
        &self.users
    }

    pub fn profile_count(&self) -> usize {
        self.profile
    }

    pub fn total_user_moves(&self) -> usize {
        self.users.iter().sum()
    }

    /// The `count` least active users, ties broken by user index.
    pub fn least_active(&self, count: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.users.len()).collect();
        order.sort_by_key(|&k| (self.users[k], k));
        order.truncate(count);
        order
    }
}
