//! The mapping thread and the frame producer.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::time::{Duration, Instant};

use tokio::sync::oneshot;

use super::{Action, Phase, SessionState, Shared, Snapshot};
use crate::error::{Error, Result};
use crate::mapper::{ingest_frame, mapping_step, FrameInput, FrameQueue, TrainState};
use crate::simio::Dataset;

const METRICS_TAIL: usize = 1000;

pub(crate) enum Command {
    Control(Action, oneshot::Sender<Result<SessionState>>),
    Click {
        keyframe_id: u32,
        u: u32,
        v: u32,
        name: String,
        reply: oneshot::Sender<Result<u16>>,
    },
}

pub(crate) struct Worker {
    pub st: TrainState,
    pub shared: Arc<Shared>,
    pub queue: Arc<FrameQueue<FrameInput>>,
    pub n_frames: usize,
    pub frames_ingested: usize,
    pub steps_since_frame: usize,
    pub snapshot_id: u64,
}

impl Worker {
    fn phase(&self) -> Phase {
        self.shared.read_state().phase
    }

    fn set_phase(&self, p: Phase) {
        self.shared.write_state().phase = p;
    }

    /// Copies the weights out and refreshes the public state.
    fn publish(&mut self) {
        self.snapshot_id += 1;
        let snap = Snapshot {
            id: self.snapshot_id,
            params: self.st.params.snapshot(),
            basis: self.st.basis.clone(),
            bounds: self.st.bounds,
            cam: self.st.cam,
            keyframes: self.st.keyframes.iter().map(|k| (k.frame_id, k.pose)).collect(),
            n_active: self.st.registry.n_active_classes(),
            n_bins: self.st.cfg.n_bins,
        };
        *self.shared.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Some(Arc::new(snap));
        let mut s = self.shared.write_state();
        s.frame_index = self.frames_ingested;
        s.n_keyframes = self.st.keyframes.len();
        s.n_active_classes = self.st.registry.n_active_classes();
        s.class_names = self.st.registry.class_names().to_vec();
        s.snapshot_id = self.snapshot_id;
        s.step = self.st.step;
        s.dropped_frames = self.queue.dropped();
    }

    fn ingest(&mut self, f: FrameInput) -> Result<()> {
        let id = f.frame_id;
        let added = ingest_frame(&mut self.st, f)?;
        log::info!("frame {id} ingested, keyframe: {added}");
        self.frames_ingested += 1;
        self.steps_since_frame = 0;
        self.publish();
        Ok(())
    }

    fn step(&mut self) -> Result<()> {
        let m = mapping_step(&mut self.st)?;
        self.steps_since_frame += 1;
        let line = serde_json::to_string(&m)?;
        {
            let mut tail = self.shared.metrics.lock().unwrap_or_else(|e| e.into_inner());
            if tail.len() == METRICS_TAIL {
                tail.pop_front();
            }
            tail.push_back(line);
        }
        self.publish();
        Ok(())
    }

    fn control(&mut self, action: Action) -> Result<SessionState> {
        let phase = self.phase();
        match (action, phase) {
            (Action::Start, Phase::Idle) | (Action::Resume, Phase::Paused) => self.set_phase(Phase::Running),
            (Action::Pause, Phase::Running) => self.set_phase(Phase::Paused),
            (Action::Step, Phase::Paused) => {
                if self.st.keyframes.is_empty() {
                    match self.queue.pop_timeout(Duration::from_secs(2)) {
                        Some(f) => self.ingest(f)?,
                        None => return Err(Error::State("no frame has arrived yet".into())),
                    }
                }
                self.step()?;
            }
            _ => {
                return Err(Error::State(format!("cannot {action:?} while {phase:?}")));
            }
        }
        Ok(self.shared.read_state().clone())
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Control(a, reply) => {
                let r = self.control(a);
                let _ = reply.send(r);
            }
            Command::Click {
                keyframe_id,
                u,
                v,
                name,
                reply,
            } => {
                let r = match self.phase() {
                    Phase::Running | Phase::Paused => self.st.add_click(keyframe_id, u, v, &name),
                    p => Err(Error::State(format!("clicks are accepted only while running or paused, not {p:?}"))),
                };
                if r.is_ok() {
                    self.publish();
                }
                let _ = reply.send(r);
            }
        }
    }

    fn fail(&mut self, e: Error) {
        log::error!("mapping stopped: {e}");
        let mut s = self.shared.write_state();
        s.phase = Phase::Finished;
        s.last_error = Some(e.to_string());
    }

    pub fn run(mut self, cmds: Receiver<Command>, stop: Arc<AtomicBool>) {
        let steps_per_frame = self.st.cfg.steps_per_frame;
        while !stop.load(Ordering::Relaxed) {
            let wait = if self.phase() == Phase::Running {
                Duration::ZERO
            } else {
                Duration::from_millis(50)
            };
            match cmds.recv_timeout(wait) {
                Ok(c) => {
                    self.handle(c);
                    while let Ok(c) = cmds.try_recv() {
                        self.handle(c);
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return,
                Err(RecvTimeoutError::Timeout) => {}
            }
            if self.phase() != Phase::Running {
                continue;
            }
            if let Some(f) = self.queue.try_pop() {
                if let Err(e) = self.ingest(f) {
                    self.fail(e);
                    continue;
                }
            }
            if self.st.keyframes.is_empty() {
                std::thread::sleep(Duration::from_millis(5));
                continue;
            }
            if self.frames_ingested == self.n_frames && self.queue.is_empty() && self.steps_since_frame >= steps_per_frame {
                self.set_phase(Phase::Finished);
                continue;
            }
            if let Err(e) = self.step() {
                self.fail(e);
            }
        }
    }
}

/// Loads frames and queues them at `fps` while the session is running.
pub(crate) fn produce(dataset: Dataset, queue: Arc<FrameQueue<FrameInput>>, shared: Arc<Shared>, fps: f64, stop: Arc<AtomicBool>) {
    let period = Duration::from_secs_f64(1.0 / fps);
    let mut next = 0;
    let mut last: Option<Instant> = None;
    while !stop.load(Ordering::Relaxed) && next < dataset.len() {
        let running = shared.read_state().phase == Phase::Running;
        if running && last.is_none_or(|t| t.elapsed() >= period) {
            match dataset.load_frame(next) {
                Ok(f) => {
                    queue.push(FrameInput {
                        frame_id: f.frame_id,
                        pose: f.pose,
                        depth: f.depth,
                        features: f.features,
                    });
                    next += 1;
                    last = Some(Instant::now());
                }
                Err(e) => {
                    log::error!("cannot load frame {next}: {e}");
                    let mut s = shared.write_state();
                    s.last_error = Some(e.to_string());
                    return;
                }
            }
        } else {
            std::thread::sleep(Duration::from_millis(5));
        }
    }
}
