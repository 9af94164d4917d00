//! Answer-set planning combined with tabular reinforcement learning for
//! non-stationary Markov decision processes.
//!
//! Domains are written in a small causal action language
//! ([`action_lang`]), compiled for a horizon into a ground logic program and
//! solved by a stable-model solver ([`asp`]). The answer sets are feasible
//! trajectories; their union defines a reduced MDP ([`mdp`]) over which
//! Q-Learning or SARSA ([`rl`]) learn. When the environment changes the
//! description is revised, the reduced MDP recomputed, and learned values
//! carried over. [`gridworld`] provides the stochastic grid world and
//! [`experiment`] the harness that compares the variants.

pub mod action_lang;
pub mod experiment;
pub mod asp;
pub mod gridworld;
pub mod mdp;
pub mod rl;
