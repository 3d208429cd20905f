//! UAV-assisted coverage for multi-cell networks with sleeping cells.
//!
//! The crate bundles a deterministic scenario simulator (hexagonal cells,
//! Rician air-to-ground links, UAV and cell energy accounting), a
//! partially observable multi-agent environment on top of it, a small
//! dense-network kernel, a prioritized replay buffer, a centralized-critic
//! multi-agent DDPG trainer and the baseline controllers used for
//! comparison.
//!
//! The numerical kernels ([`nn`], [`channel`], [`energy`]) are generic over
//! [`Scalar`] (`f32` or `f64`). Everything above them runs in `f64`; the
//! aliases below name the concrete instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod energy;
pub mod env;
pub mod error;
pub mod harness;
pub mod maddpg;
pub mod nn;
pub mod policies;
pub mod replay;
pub mod scalar;
pub mod world;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ChannelParams = channel::ChannelParams<f64>;
pub type SinrReport = channel::SinrReport<f64>;
pub type EnergyParams = energy::EnergyParams<f64>;
pub type EnergyLedger = energy::EnergyLedger<f64>;
pub type EnergyTrace = energy::EnergyTrace<f64>;
pub type Mlp = nn::Mlp<f64>;
pub type AdamState = nn::AdamState<f64>;
pub type Gradients = nn::Gradients<f64>;

pub type Mlp32 = nn::Mlp<f32>;
pub type ChannelParams32 = channel::ChannelParams<f32>;
pub type EnergyParams32 = energy::EnergyParams<f32>;
