//! Broadcast message bus with one-step delivery delay.
//!
//! Messages chosen at step t are read by policies at t+1, and the
//! unexpectedness module consumes the other agents' messages from t-2 (the
//! ones the agent had in hand at t-1). The buffer keeps the last three
//! time slices to serve both views; anything before the episode start reads
//! as zeros.

use thiserror::Error;

/// Default total message length per agent.
pub const MESSAGE_LEN: usize = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CommError {
    #[error("publish at step {got} but the buffer expects step {expected}")]
    OutOfOrderPublish { expected: u32, got: u32 },
    #[error("expected {expected} messages, got {got}")]
    WrongMessageCount { expected: usize, got: usize },
    #[error("message length {got} does not match the buffer's {expected}")]
    WrongMessageLen { expected: usize, got: usize },
}

/// Fixed-length per-agent message. The first `reward_len` values are the
/// reward-trained bits (0 or 1); the remaining `ues_len` values are the
/// unexpectedness encoding, each in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct MessageVector {
    values: Vec<f64>,
    reward_len: usize,
    ues_len: usize,
}

impl MessageVector {
    pub fn new(values: Vec<f64>, reward_len: usize, ues_len: usize) -> Self {
        assert_eq!(
            values.len(),
            reward_len + ues_len,
            "message length {} does not match split ({reward_len}, {ues_len})",
            values.len()
        );
        assert!(
            values[..reward_len].iter().all(|&v| v == 0.0 || v == 1.0),
            "reward part must be binary"
        );
        assert!(
            values[reward_len..].iter().all(|&v| (0.0..=1.0).contains(&v)),
            "ues part must lie in [0, 1]"
        );
        MessageVector {
            values,
            reward_len,
            ues_len,
        }
    }

    pub fn zeros(reward_len: usize, ues_len: usize) -> Self {
        MessageVector {
            values: vec![0.0; reward_len + ues_len],
            reward_len,
            ues_len,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scheme_split(&self) -> (usize, usize) {
        (self.reward_len, self.ues_len)
    }

    pub fn reward_part(&self) -> &[f64] {
        &self.values[..self.reward_len]
    }

    pub fn ues_part(&self) -> &[f64] {
        &self.values[self.reward_len..]
    }
}

/// Ring of the last three time slices of all agents' messages.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageBuffer {
    n_agents: usize,
    message_len: usize,
    /// (step, one message per agent); at most 3 slices, oldest first.
    slices: Vec<(u32, Vec<MessageVector>)>,
    next_step: u32,
}

impl MessageBuffer {
    pub fn new(n_agents: usize, message_len: usize) -> Self {
        MessageBuffer {
            n_agents,
            message_len,
            slices: Vec::with_capacity(3),
            next_step: 0,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn message_len(&self) -> usize {
        self.message_len
    }

    /// Drops all history; the next publish must be step 0. Used at episode
    /// boundaries, where message history does not carry over.
    pub fn reset(&mut self) {
        self.slices.clear();
        self.next_step = 0;
    }

    /// Stores the slice for step `t`, which must be exactly the next
    /// expected step. Slices older than t-2 are dropped.
    pub fn publish(&mut self, t: u32, all_messages: Vec<MessageVector>) -> Result<(), CommError> {
        if t != self.next_step {
            return Err(CommError::OutOfOrderPublish {
                expected: self.next_step,
                got: t,
            });
        }
        if all_messages.len() != self.n_agents {
            return Err(CommError::WrongMessageCount {
                expected: self.n_agents,
                got: all_messages.len(),
            });
        }
        for m in &all_messages {
            if m.len() != self.message_len {
                return Err(CommError::WrongMessageLen {
                    expected: self.message_len,
                    got: m.len(),
                });
            }
        }
        if self.slices.len() == 3 {
            self.slices.remove(0);
        }
        self.slices.push((t, all_messages));
        self.next_step = t + 1;
        Ok(())
    }

    fn slice(&self, t: i64) -> Option<&[MessageVector]> {
        self.slices
            .iter()
            .find(|(st, _)| *st as i64 == t)
            .map(|(_, ms)| ms.as_slice())
    }

    /// Policy-side inbox at step `t`: every agent's message from step t-1
    /// (the receiving agent's own included), concatenated in agent-index
    /// order. Zeros before any message exists. Length `n_agents *
    /// message_len`.
    pub fn policy_inbox(&self, agent_index: usize, t: u32) -> Vec<f64> {
        assert!(agent_index < self.n_agents, "agent index out of range");
        let mut out = Vec::with_capacity(self.n_agents * self.message_len);
        match self.lookup(t as i64 - 1) {
            Some(ms) => {
                for m in ms {
                    out.extend_from_slice(m.values());
                }
            }
            None => out.resize(self.n_agents * self.message_len, 0.0),
        }
        out
    }

    /// Unexpectedness-module inbox at step `t`: every OTHER agent's message
    /// from step t-2, concatenated in agent-index order. Zeros before any
    /// message exists. Length `(n_agents - 1) * message_len`.
    pub fn uem_inbox(&self, agent_index: usize, t: u32) -> Vec<f64> {
        assert!(agent_index < self.n_agents, "agent index out of range");
        let mut out = Vec::with_capacity((self.n_agents - 1) * self.message_len);
        match self.lookup(t as i64 - 2) {
            Some(ms) => {
                for (i, m) in ms.iter().enumerate() {
                    if i != agent_index {
                        out.extend_from_slice(m.values());
                    }
                }
            }
            None => out.resize((self.n_agents - 1) * self.message_len, 0.0),
        }
        out
    }

    fn lookup(&self, t: i64) -> Option<&[MessageVector]> {
        if t < 0 {
            return None;
        }
        let ms = self.slice(t);
        assert!(
            ms.is_some() || t >= self.next_step as i64,
            "slice {t} was already dropped from the ring"
        );
        ms
    }
}
