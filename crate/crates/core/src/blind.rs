//! Black-box view of a device.
//!
//! Reverse-engineering code must not see tracker internals, the fault map,
//! or the tracker event log. This wrapper narrows a [`DramDevice`] to what a
//! memory controller on real hardware has: the command bus, the address
//! mapping, datasheet timing values, and the geometry printed on the label.
//! Evaluation harnesses recover the full device with [`BlindDevice::into_inner`]
//! after inference is done; inference code itself only ever holds the wrapper.

use crate::dram::config::TimingParams;
use crate::dram::DramDevice;
use crate::dram::command::{CommandResult, DramCommand};
use crate::error::Result;

/// Command-bus-only handle on a device.
#[derive(Debug)]
pub struct BlindDevice {
    device: DramDevice,
}

impl BlindDevice {
    pub fn new(device: DramDevice) -> Self {
        BlindDevice { device }
    }

    /// Issues one command, exactly as [`DramDevice::issue`] would.
    pub fn issue(&mut self, cmd: DramCommand) -> Result<CommandResult> {
        self.device.issue(cmd)
    }

    /// Current virtual time in nanoseconds.
    pub fn clock_ns(&self) -> u64 {
        self.device.clock_ns()
    }

    /// Total ACT commands issued so far. Bus-side knowledge: the controller
    /// sent every one of them.
    pub fn acts_issued(&self) -> u64 {
        self.device.acts_issued()
    }

    /// Total REF commands issued so far.
    pub fn refs_issued(&self) -> u64 {
        self.device.refs_issued()
    }

    pub fn banks(&self) -> usize {
        self.device.banks()
    }

    pub fn rows_per_bank(&self) -> usize {
        self.device.rows_per_bank()
    }

    pub fn row_bits(&self) -> usize {
        self.device.row_bits()
    }

    /// Datasheet timing parameters. These are public on real modules.
    pub fn timing(&self) -> &TimingParams {
        self.device.timing()
    }

    /// Logical-to-physical row translation, as derived from vendor
    /// documentation or prior mapping reverse engineering.
    pub fn to_physical(&self, logical: usize) -> Result<usize> {
        self.device.to_physical(logical)
    }

    pub fn to_logical(&self, physical: usize) -> Result<usize> {
        self.device.to_logical(physical)
    }

    /// Unwraps the device for post-inference evaluation.
    pub fn into_inner(self) -> DramDevice {
        self.device
    }
}

impl From<DramDevice> for BlindDevice {
    fn from(device: DramDevice) -> Self {
        BlindDevice::new(device)
    }
}
