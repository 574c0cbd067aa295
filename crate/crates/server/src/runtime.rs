//! Pacing thread. It owns the [`Session`]; network tasks talk to it through
//! an ordered command queue and receive serialized snapshots on a broadcast
//! channel.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use tokio::sync::{broadcast, mpsc as tokio_mpsc};

use crate::session::Session;
use crate::wire::{ClientMessage, ServerMessage};

/// Longest stretch of simulated time run in one go after a stall, ticks.
const MAX_CATCH_UP: u64 = 100;
const IDLE_POLL: Duration = Duration::from_millis(5);
const BUSY_POLL: Duration = Duration::from_micros(500);

pub type Snapshot = Arc<str>;

struct Command {
    msg: ClientMessage,
    /// Errors go back to the sender only.
    reply: tokio_mpsc::UnboundedSender<ServerMessage>,
}

#[derive(Clone)]
pub struct SessionHandle {
    commands: mpsc::Sender<Command>,
    snapshots: broadcast::Sender<Snapshot>,
}

impl SessionHandle {
    /// Starts the pacing thread. It exits once every handle is dropped.
    pub fn spawn(session: Session) -> Self {
        let (commands, rx) = mpsc::channel();
        let (snapshots, _) = broadcast::channel(1024);
        let out = snapshots.clone();
        thread::Builder::new()
            .name("haptic-loop".into())
            .spawn(move || pace(session, rx, out))
            .expect("spawn pacing thread");
        Self { commands, snapshots }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Snapshot> {
        self.snapshots.subscribe()
    }

    /// Queues a client message. Returns false if the loop has stopped.
    pub fn send(&self, msg: ClientMessage, reply: tokio_mpsc::UnboundedSender<ServerMessage>) -> bool {
        self.commands.send(Command { msg, reply }).is_ok()
    }
}

fn publish(out: &broadcast::Sender<Snapshot>, messages: Vec<ServerMessage>) {
    for m in messages {
        // no subscribers is fine
        let _ = out.send(m.to_json().into());
    }
}

fn pace(mut session: Session, rx: mpsc::Receiver<Command>, out: broadcast::Sender<Snapshot>) {
    let rate = f64::from(session.config().loop_config.rate_hz);
    let mut anchor = Instant::now();
    let mut ticks_done: u64 = 0;
    loop {
        loop {
            match rx.try_recv() {
                Ok(Command { msg, reply }) => {
                    let starting = matches!(msg, ClientMessage::StartTrial(_));
                    match session.apply(msg) {
                        Ok(messages) => {
                            if starting {
                                anchor = Instant::now();
                                ticks_done = 0;
                            }
                            publish(&out, messages);
                        }
                        Err(e) => {
                            let _ = reply.send(e.to_message());
                        }
                    }
                }
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }

        if !session.is_active() {
            thread::sleep(IDLE_POLL);
            continue;
        }
        let due = (anchor.elapsed().as_secs_f64() * rate) as u64;
        if due > ticks_done {
            let n = (due - ticks_done).min(MAX_CATCH_UP);
            if n < due - ticks_done {
                tracing::warn!(behind = due - ticks_done, "haptic loop fell behind wall clock");
            }
            // a stall slows simulated time rather than bursting through it
            ticks_done = due;
            publish(&out, session.advance(n));
        }
        thread::sleep(BUSY_POLL);
    }
}
