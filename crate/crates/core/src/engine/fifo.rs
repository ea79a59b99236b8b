use std::collections::VecDeque;

/// Registered queue. Writes land at the next commit; reads free space only
/// at the next commit, so room is judged on start-of-tick occupancy plus
/// writes staged this tick.
#[derive(Debug, Clone)]
pub struct Fifo<T> {
    items: VecDeque<T>,
    cap: Option<usize>,
    start_len: usize,
    staged: Vec<T>,
    pub reads: u64,
    pub writes: u64,
}

impl<T> Fifo<T> {
    pub fn new(cap: Option<usize>) -> Self {
        Fifo {
            items: VecDeque::new(),
            cap,
            start_len: 0,
            staged: Vec::new(),
            reads: 0,
            writes: 0,
        }
    }

    pub fn can_push(&self) -> bool {
        self.cap.is_none_or(|c| self.start_len + self.staged.len() < c)
    }

    pub fn push(&mut self, v: T) {
        debug_assert!(self.can_push(), "push into full fifo");
        self.staged.push(v);
        self.writes += 1;
    }

    pub fn front(&self) -> Option<&T> {
        self.items.front()
    }

    pub fn pop(&mut self) -> Option<T> {
        let v = self.items.pop_front();
        if v.is_some() {
            self.reads += 1;
        }
        v
    }

    pub fn commit(&mut self) {
        self.items.extend(self.staged.drain(..));
        self.start_len = self.items.len();
    }

    /// Visible plus staged entries.
    pub fn occupancy(&self) -> usize {
        self.items.len() + self.staged.len()
    }

    pub fn is_idle(&self) -> bool {
        self.items.is_empty() && self.staged.is_empty()
    }
}
