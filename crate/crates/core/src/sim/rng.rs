use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream families. Each stochastic source gets its own ChaCha stream so
/// two runs with the same seed see the same arrivals, upload draws and
/// service coins no matter what the policies do with them.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum StreamKind {
    Arrival = 1,
    Upload = 2,
    Service = 3,
    Signaling = 4,
    Policy = 5,
    Replication = 6,
}

pub fn stream(seed: u64, kind: StreamKind, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 48) | (index & 0xffff_ffff_ffff));
    rng
}

/// Derives an independent 64-bit seed, e.g. per replication.
pub fn derive_seed(seed: u64, kind: StreamKind, index: u64) -> u64 {
    stream(seed, kind, index).random()
}

#[derive(Debug, Clone)]
pub(crate) struct RngStreams {
    num_job_types: usize,
    arrival: Vec<ChaCha8Rng>,
    upload: Vec<ChaCha8Rng>,
    service: Vec<ChaCha8Rng>,
    signaling: Vec<ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(seed: u64, num_aps: usize, num_servers: usize, num_job_types: usize) -> Self {
        let family = |kind, n: usize| (0..n as u64).map(|i| stream(seed, kind, i)).collect();
        Self {
            num_job_types,
            arrival: family(StreamKind::Arrival, num_aps * num_job_types),
            upload: family(StreamKind::Upload, num_aps * num_job_types),
            service: family(StreamKind::Service, num_servers * num_job_types),
            signaling: family(StreamKind::Signaling, num_aps),
        }
    }

    pub fn arrival(&mut self, k: usize, j: usize) -> f64 {
        self.arrival[k * self.num_job_types + j].random()
    }

    pub fn upload(&mut self, k: usize, j: usize) -> f64 {
        self.upload[k * self.num_job_types + j].random()
    }

    pub fn service(&mut self, m: usize, j: usize) -> f64 {
        self.service[m * self.num_job_types + j].random()
    }

    pub fn signaling(&mut self, k: usize) -> f64 {
        self.signaling[k].random()
    }
}
