//! HTTP façade over a live mapping session.
//!
//! One thread owns the [`TrainState`](crate::mapper::TrainState) and applies
//! commands between steps; handlers only read published snapshots.

mod png;
mod routes;
mod worker;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::mapper::{FrameQueue, MapperConfig, TrainState};
use crate::renderer::{Camera, Pose};
use crate::scene_field::{Aabb, EncodingBasis, FieldConfig, ParamSnapshot};
use crate::simio::Dataset;

pub use png::{depth_png, feature_png, label_png, PALETTE, VOID_INDEX};
pub use routes::router;
use worker::{Command, Worker};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Running,
    Paused,
    Finished,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub phase: Phase,
    /// Frames ingested so far.
    pub frame_index: usize,
    pub n_frames: usize,
    pub n_keyframes: usize,
    pub n_active_classes: usize,
    pub class_names: Vec<String>,
    /// Increases with every published snapshot; 0 before the first.
    pub snapshot_id: u64,
    pub step: u64,
    pub dropped_frames: u64,
    pub last_error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Start,
    Pause,
    Resume,
    Step,
}

/// Weights and camera data published at a step boundary.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub id: u64,
    pub params: ParamSnapshot,
    pub basis: EncodingBasis,
    pub bounds: Aabb,
    pub cam: Camera,
    pub keyframes: Vec<(u32, Pose)>,
    pub n_active: usize,
    pub n_bins: usize,
}

pub(crate) struct Shared {
    state: RwLock<SessionState>,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    metrics: Mutex<VecDeque<String>>,
}

impl Shared {
    fn read_state(&self) -> RwLockReadGuard<'_, SessionState> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_state(&self) -> RwLockWriteGuard<'_, SessionState> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }
}

/// A running session: the mapping thread, the frame producer and the
/// channels the HTTP handlers use.
pub struct ServiceHandle {
    cmds: Mutex<Sender<Command>>,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    threads: Mutex<Vec<JoinHandle<()>>>,
}

impl ServiceHandle {
    /// Starts the worker threads in the idle phase.
    pub fn spawn(dataset: Dataset, field_cfg: FieldConfig, cfg: MapperConfig, fps: f64) -> Result<Arc<Self>> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Config(format!("fps {fps} must be positive")));
        }
        if dataset.is_empty() {
            return Err(Error::Input("dataset has no frames".into()));
        }
        if dataset.manifest.feature_dim != field_cfg.feature_dim {
            return Err(Error::Config(format!(
                "dataset features have dimension {} but the field produces {}",
                dataset.manifest.feature_dim, field_cfg.feature_dim
            )));
        }
        let st = TrainState::new(field_cfg, cfg, dataset.camera(), dataset.bounds())?;
        let shared = Arc::new(Shared {
            state: RwLock::new(SessionState {
                phase: Phase::Idle,
                frame_index: 0,
                n_frames: dataset.len(),
                n_keyframes: 0,
                n_active_classes: 0,
                class_names: Vec::new(),
                snapshot_id: 0,
                step: 0,
                dropped_frames: 0,
                last_error: None,
            }),
            snapshot: RwLock::new(None),
            metrics: Mutex::new(VecDeque::new()),
        });
        let queue = Arc::new(FrameQueue::new(FrameQueue::<()>::DEFAULT_CAPACITY));
        let stop = Arc::new(AtomicBool::new(false));
        let (tx, rx) = mpsc::channel();
        let worker = Worker {
            st,
            shared: shared.clone(),
            queue: queue.clone(),
            n_frames: dataset.len(),
            frames_ingested: 0,
            steps_since_frame: 0,
            snapshot_id: 0,
        };
        let mapping = {
            let stop = stop.clone();
            std::thread::Builder::new()
                .name("mapping".into())
                .spawn(move || worker.run(rx, stop))
                .map_err(|e| Error::io("mapping thread", e))?
        };
        let producer = {
            let (shared, stop) = (shared.clone(), stop.clone());
            std::thread::Builder::new()
                .name("frames".into())
                .spawn(move || worker::produce(dataset, queue, shared, fps, stop))
                .map_err(|e| Error::io("frame thread", e))?
        };
        Ok(Arc::new(Self {
            cmds: Mutex::new(tx),
            shared,
            stop,
            threads: Mutex::new(vec![mapping, producer]),
        }))
    }

    pub fn state(&self) -> SessionState {
        self.shared.read_state().clone()
    }

    pub fn snapshot(&self) -> Option<Arc<Snapshot>> {
        self.shared.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Up to `n` most recent metrics lines.
    pub fn metrics_tail(&self, n: usize) -> Vec<String> {
        let m = self.shared.metrics.lock().unwrap_or_else(|e| e.into_inner());
        m.iter().skip(m.len().saturating_sub(n)).cloned().collect()
    }

    fn send(&self, cmd: Command) -> Result<()> {
        self.cmds
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .send(cmd)
            .map_err(|_| Error::State("mapping thread has stopped".into()))
    }

    pub async fn control(&self, action: Action) -> Result<SessionState> {
        let (tx, rx) = oneshot::channel();
        self.send(Command::Control(action, tx))?;
        rx.await.map_err(|_| Error::State("mapping thread has stopped".into()))?
    }

    pub async fn click(&self, keyframe_id: u32, u: u32, v: u32, name: String) -> Result<u16> {
        let (reply, rx) = oneshot::channel();
        self.send(Command::Click {
            keyframe_id,
            u,
            v,
            name,
            reply,
        })?;
        rx.await.map_err(|_| Error::State("mapping thread has stopped".into()))?
    }

    /// Stops and joins the worker threads.
    pub fn shutdown(&self) {
        self.stop.store(true, Ordering::Relaxed);
        let threads: Vec<_> = self.threads.lock().unwrap_or_else(|e| e.into_inner()).drain(..).collect();
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Runs the HTTP server on `0.0.0.0:port` until the process is stopped.
pub fn serve(dataset: Dataset, field_cfg: FieldConfig, cfg: MapperConfig, fps: f64, port: u16) -> Result<()> {
    let handle = ServiceHandle::spawn(dataset, field_cfg, cfg, fps)?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(async move {
        let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::io(format!("0.0.0.0:{port}"), e))?;
        log::info!("listening on http://{addr}");
        axum::serve(listener, router(handle))
            .await
            .map_err(|e| Error::io("http server", e))
    })
}
