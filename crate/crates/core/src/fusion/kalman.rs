//! Scalar constant-velocity Kalman filter, one per marker coordinate.

/// State `[position, velocity]` with its covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvFilter {
    pub x: [f64; 2],
    /// Symmetric covariance `[[p00, p01], [p01, p11]]`.
    pub p: [[f64; 2]; 2],
}

impl CvFilter {
    pub fn new(position: f64, initial_variance: f64) -> Self {
        Self {
            x: [position, 0.0],
            p: [[initial_variance, 0.0], [0.0, initial_variance]],
        }
    }

    /// Constant-velocity prediction over `dt` seconds with white-acceleration
    /// spectral density `q`.
    pub fn predict(&mut self, dt: f64, q: f64) {
        let [[a, b], [_, d]] = self.p;
        self.x[0] += dt * self.x[1];
        let p00 = a + 2.0 * dt * b + dt * dt * d + q * dt.powi(3) / 3.0;
        let p01 = b + dt * d + q * dt * dt / 2.0;
        let p11 = d + q * dt;
        self.p = [[p00, p01], [p01, p11]];
    }

    /// Joseph-form update with a position measurement `z` of variance `r`.
    pub fn update(&mut self, z: f64, r: f64) {
        let [[a, b], [_, d]] = self.p;
        let s = a + r;
        let k0 = a / s;
        let k1 = b / s;
        let innovation = z - self.x[0];
        self.x[0] += k0 * innovation;
        self.x[1] += k1 * innovation;
        // (I - K H) P (I - K H)^T + K r K^T with I - K H = [[1-k0, 0], [-k1, 1]].
        let g = 1.0 - k0;
        let p00 = g * g * a + k0 * k0 * r;
        let p01 = g * (b - k1 * a) + k0 * k1 * r;
        let p11 = d - 2.0 * k1 * b + k1 * k1 * a + k1 * k1 * r;
        self.p = [[p00, p01], [p01, p11]];
    }

    /// Eigenvalues of the covariance, ascending.
    pub fn covariance_eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.p;
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - radius, mean + radius]
    }
}
