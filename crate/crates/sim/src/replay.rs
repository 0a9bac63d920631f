//! Drives the device state machine through a trajectory on a virtual clock.
//!
//! Each event yields exactly one log line. Lines depend only on the events,
//! the policy, the start time and what the box source returns, so identical
//! inputs against identical server state give byte-identical logs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use geofence_core::{
    BoxId, BoxSource, Device, DeviceError, DevicePolicy, DeviceState, FetchError, RefreshReason, Timestamp,
};

use crate::trajectory::{EventKind, TrajectoryEvent};

/// Virtual epoch that trajectory offsets are added to.
pub const DEFAULT_START: Timestamp = 1_700_000_000;

pub struct Replayer<S> {
    device: Device,
    source: S,
    start: Timestamp,
    online: bool,
    /// A trigger whose refresh has not succeeded yet; retried on the next fix
    /// or when the network returns.
    pending: Option<RefreshReason>,
}

impl<S: BoxSource> Replayer<S> {
    pub fn new(policy: DevicePolicy, source: S, start: Timestamp) -> Result<Self, DeviceError> {
        Self::with_state(policy, DeviceState::default(), source, start)
    }

    pub fn with_state(
        policy: DevicePolicy,
        state: DeviceState,
        source: S,
        start: Timestamp,
    ) -> Result<Self, DeviceError> {
        Ok(Self {
            device: Device::with_state(policy, state)?,
            source,
            start,
            online: true,
            pending: None,
        })
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn into_device(self) -> Device {
        self.device
    }

    pub fn is_online(&self) -> bool {
        self.online
    }

    pub fn set_online(&mut self, online: bool) {
        self.online = online;
    }

    pub fn run(&mut self, events: &[TrajectoryEvent]) -> Vec<String> {
        events.iter().map(|e| self.step(e)).collect()
    }

    /// Applies one event and returns its log line.
    pub fn step(&mut self, event: &TrajectoryEvent) -> String {
        let now = self.start + event.t;
        let mut line = format!("t={}", event.t);
        match event.kind {
            EventKind::Fix(p) => {
                let trigger = self.device.tick(now, p);
                let _ = write!(line, " fix lat={:.6} lon={:.6} trigger=", p.lat(), p.lon());
                match trigger {
                    Some(r) => {
                        let _ = write!(line, "{r}");
                    }
                    None => line.push_str("none"),
                }
                let attempt = trigger.or(self.pending);
                if trigger.is_none() {
                    if let Some(r) = attempt {
                        let _ = write!(line, " pending={r}");
                    }
                }
                if let Some(reason) = attempt {
                    self.attempt_refresh(reason, now, &mut line);
                }
            }
            EventKind::Capture => {
                let decision = match self.device.state().last_location() {
                    Some(fix) => self.device.capture_request(now, fix),
                    None => geofence_core::CaptureDecision::DeniedNoCoverage,
                };
                let _ = write!(line, " capture {decision}");
            }
            EventKind::NetDown => {
                self.online = false;
                line.push_str(" net_down");
            }
            EventKind::NetUp => {
                self.online = true;
                line.push_str(" net_up");
                if let Some(reason) = self.pending {
                    let _ = write!(line, " pending={reason}");
                    self.attempt_refresh(reason, now, &mut line);
                }
            }
        }
        tracing::debug!("{line}");
        line
    }

    fn attempt_refresh(&mut self, reason: RefreshReason, now: Timestamp, line: &mut String) {
        if !self.online {
            self.pending = Some(reason);
            line.push_str(" refresh=deferred_offline");
            return;
        }
        let before: BTreeSet<BoxId> = self.device.state().cache().iter().map(|b| b.id()).collect();
        match self.device.refresh(&self.source, now) {
            Ok(n) => {
                self.pending = None;
                let after: BTreeSet<BoxId> = self.device.state().cache().iter().map(|b| b.id()).collect();
                let added: Vec<String> = after.difference(&before).map(|id| id.to_string()).collect();
                let dropped = before.difference(&after).count();
                let _ = write!(line, " refresh=ok boxes={n} added=[{}] dropped={dropped}", added.join(","));
            }
            Err(e) => {
                tracing::warn!(error = %e, "refresh failed");
                self.pending = Some(reason);
                // the error text can carry ephemeral details such as ports
                match e {
                    FetchError::ServerRejected(status) => {
                        let _ = write!(line, " refresh=failed rejected_{status}");
                    }
                    FetchError::FetchFailed(_) => line.push_str(" refresh=failed unreachable"),
                }
            }
        }
    }
}
