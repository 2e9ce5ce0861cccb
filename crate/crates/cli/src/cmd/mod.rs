// SPDX-License-Identifier: MIT OR Apache-2.0

pub mod diag;
pub mod eval;
pub mod fixture;
pub mod kappa;
pub mod memory;
pub mod serve;
pub mod tune;
