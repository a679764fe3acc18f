//! Where device work executes: inline on the calling thread, or on a pool of
//! persistent threads that each own a fixed subset of the workers.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::worker::{Command, Reply, Worker};
use crate::error::{Error, Result};
use crate::nn::NormalizedAdjacency;
use crate::tensor::Real;

enum Job<T> {
    Run { device: usize, command: Command<T> },
    Shutdown,
}

type Answer<T> = (usize, Result<Reply<T>>);

pub(crate) struct Pool<T> {
    senders: Vec<Sender<Job<T>>>,
    /// Thread index owning each device.
    owner: Vec<usize>,
    replies: Receiver<Answer<T>>,
    handles: Vec<JoinHandle<()>>,
}

pub(crate) enum Executor<T> {
    Inline {
        adj: Arc<NormalizedAdjacency<T>>,
        workers: Vec<Worker<T>>,
    },
    Threads(Pool<T>),
}

fn run_thread<T: Real>(
    adj: Arc<NormalizedAdjacency<T>>,
    mut workers: Vec<Worker<T>>,
    jobs: Receiver<Job<T>>,
    replies: Sender<Answer<T>>,
) {
    while let Ok(Job::Run { device, command }) = jobs.recv() {
        let result = match workers.iter_mut().find(|w| w.device() == device) {
            Some(worker) => catch_unwind(AssertUnwindSafe(|| worker.handle(&adj, command))).unwrap_or_else(|_| {
                Err(Error::Worker {
                    device,
                    message: "worker panicked".into(),
                })
            }),
            None => Err(Error::Worker {
                device,
                message: "device is not owned by this thread".into(),
            }),
        };
        if replies.send((device, result)).is_err() {
            break;
        }
    }
}

impl<T: Real> Executor<T> {
    /// `threads == 0` runs inline; otherwise `min(threads, p)` threads with
    /// device `i` on thread `i mod threads`.
    pub(crate) fn new(adj: Arc<NormalizedAdjacency<T>>, workers: Vec<Worker<T>>, threads: usize) -> Result<Self> {
        if threads == 0 {
            return Ok(Executor::Inline { adj, workers });
        }
        let threads = threads.min(workers.len()).max(1);
        let owner: Vec<usize> = (0..workers.len()).map(|i| i % threads).collect();
        let mut groups: Vec<Vec<Worker<T>>> = (0..threads).map(|_| Vec::new()).collect();
        for (i, w) in workers.into_iter().enumerate() {
            groups[i % threads].push(w);
        }
        let (reply_tx, replies) = channel();
        let mut senders = Vec::with_capacity(threads);
        let mut handles = Vec::with_capacity(threads);
        for (t, group) in groups.into_iter().enumerate() {
            let (tx, rx) = channel();
            let adj = Arc::clone(&adj);
            let reply_tx = reply_tx.clone();
            let handle = std::thread::Builder::new()
                .name(format!("device-{t}"))
                .spawn(move || run_thread(adj, group, rx, reply_tx))
                .map_err(|e| Error::Worker {
                    device: t,
                    message: format!("could not spawn thread: {e}"),
                })?;
            senders.push(tx);
            handles.push(handle);
        }
        Ok(Executor::Threads(Pool {
            senders,
            owner,
            replies,
            handles,
        }))
    }

    pub(crate) fn devices(&self) -> usize {
        match self {
            Executor::Inline { workers, .. } => workers.len(),
            Executor::Threads(pool) => pool.owner.len(),
        }
    }

    /// Runs `(device, command)` pairs and returns the replies in the order
    /// given. Commands for different devices may run concurrently; the first
    /// failure in that order is reported.
    pub(crate) fn dispatch(&mut self, commands: Vec<(usize, Command<T>)>) -> Result<Vec<Reply<T>>> {
        let p = self.devices();
        let mut seen = vec![false; p];
        for &(d, _) in &commands {
            if d >= p || std::mem::replace(&mut seen[d], true) {
                return Err(Error::InvalidArgument(format!("bad or repeated device {d} in dispatch")));
            }
        }
        match self {
            Executor::Inline { adj, workers } => commands
                .into_iter()
                .map(|(d, c)| workers[d].handle(adj, c))
                .collect(),
            Executor::Threads(pool) => {
                let order: Vec<usize> = commands.iter().map(|&(d, _)| d).collect();
                for (device, command) in commands {
                    pool.senders[pool.owner[device]]
                        .send(Job::Run { device, command })
                        .map_err(|_| Error::Worker {
                            device,
                            message: "device thread has stopped".into(),
                        })?;
                }
                let mut slots: Vec<Option<Result<Reply<T>>>> = (0..p).map(|_| None).collect();
                for _ in 0..order.len() {
                    let (device, result) = pool.replies.recv().map_err(|_| Error::Worker {
                        device: order[0],
                        message: "device threads hung up".into(),
                    })?;
                    slots[device] = Some(result);
                }
                order
                    .into_iter()
                    .map(|d| slots[d].take().expect("one reply per command"))
                    .collect()
            }
        }
    }

    /// Sends the same kind of command to every device in ascending order.
    pub(crate) fn broadcast(&mut self, mut make: impl FnMut(usize) -> Command<T>) -> Result<Vec<Reply<T>>> {
        let commands = (0..self.devices()).map(|d| (d, make(d))).collect();
        self.dispatch(commands)
    }
}

impl<T> Drop for Pool<T> {
    fn drop(&mut self) {
        for tx in &self.senders {
            let _ = tx.send(Job::Shutdown);
        }
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}
