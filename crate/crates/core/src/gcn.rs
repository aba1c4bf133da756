//! Spectral graph convolution over the substrate topology.
//!
//! The propagation operator is the symmetric-normalized Laplacian
//! L = I - D^{-1/2} A D^{-1/2}, whose spectrum lies in [0, 2], keeping
//! polynomial filters stable. Filtering is computed two ways: a fast
//! polynomial path (repeated matrix-vector products, never forming L^k)
//! and an eigenbasis reference path kept as the test oracle. The network
//! stacks filter-then-channel-mix layers with a rectifier between them and
//! carries its own reverse-accumulation gradients.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::substrate::SubstrateNetwork;

/// Unweighted adjacency matrix of the substrate: 1.0 where a link exists.
pub fn adjacency(net: &SubstrateNetwork) -> DMatrix<f64> {
    let n = net.node_count();
    let mut a = DMatrix::zeros(n, n);
    for l in net.links() {
        let (u, v) = l.endpoints;
        a[(u, v)] = 1.0;
        a[(v, u)] = 1.0;
    }
    a
}

/// Symmetric-normalized Laplacian I - D^{-1/2} A D^{-1/2}.
/// Isolated nodes get the identity row (their inverse root degree is
/// treated as zero), so the result stays symmetric positive semidefinite.
pub fn normalized_laplacian(net: &SubstrateNetwork) -> DMatrix<f64> {
    let a = adjacency(net);
    let n = a.nrows();
    let d_inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let deg: f64 = a.row(i).sum();
            if deg > 0.0 {
                deg.sqrt().recip()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = DMatrix::identity(n, n);
    for i in 0..n {
        for j in 0..n {
            l[(i, j)] -= d_inv_sqrt[i] * a[(i, j)] * d_inv_sqrt[j];
        }
    }
    l
}

/// Eigendecomposition of a symmetric positive semidefinite operator, with
/// eigenvalues sorted ascending and each eigenvector's sign fixed so its
/// largest-magnitude entry is positive. Columns of `eigenvectors` form an
/// orthonormal basis and `laplacian = U diag(eigenvalues) U^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpectrum {
    pub laplacian: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl GraphSpectrum {
    pub fn from_laplacian(laplacian: DMatrix<f64>) -> Self {
        assert_eq!(laplacian.nrows(), laplacian.ncols(), "operator is square");
        let eig = laplacian.clone().symmetric_eigen();
        let n = laplacian.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let mut eigenvalues = Vec::with_capacity(n);
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            eigenvalues.push(eig.eigenvalues[src]);
            let mut col = eig.eigenvectors.column(src).clone_owned();
            let lead = col
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
                .map(|(i, _)| i)
                .unwrap();
            if col[lead] < 0.0 {
                col.neg_mut();
            }
            eigenvectors.set_column(dst, &col);
        }
        Self { laplacian, eigenvalues, eigenvectors }
    }

    pub fn of_substrate(net: &SubstrateNetwork) -> Self {
        Self::from_laplacian(normalized_laplacian(net))
    }
}

/// Forward transform into the eigenbasis: coefficients U^T f.
pub fn graph_fourier(u: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
    assert_eq!(u.nrows(), f.len(), "signal length matches the basis");
    u.transpose() * f
}

/// Inverse transform U f_hat; the orthonormal basis makes this the exact
/// inverse of the forward transform.
pub fn inverse_fourier(u: &DMatrix<f64>, f_hat: &DVector<f64>) -> DVector<f64> {
    assert_eq!(u.ncols(), f_hat.len(), "coefficient length matches the basis");
    u * f_hat
}

/// Polynomial spectral filter: response Σ_k coeffs[k] λ^k.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFilter {
    pub coeffs: Vec<f64>,
}

impl SpectralFilter {
    pub fn order(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// Fast filtering path: Σ_k coeffs[k] L^k f via repeated products.
pub fn spectral_conv(l: &DMatrix<f64>, filter: &SpectralFilter, f: &DVector<f64>) -> DVector<f64> {
    assert!(!filter.coeffs.is_empty(), "filter has at least the constant term");
    assert!(filter.coeffs.iter().all(|c| c.is_finite()), "filter coefficients are finite");
    let mut term = f.clone();
    let mut out = filter.coeffs[0] * &term;
    for &c in &filter.coeffs[1..] {
        term = l * term;
        out += c * &term;
    }
    out
}

/// Reference filtering path through the eigenbasis:
/// U diag(Σ_k coeffs[k] λ^k) U^T f. Kept as the oracle the fast path is
/// checked against.
pub fn spectral_conv_eigen(
    spectrum: &GraphSpectrum,
    filter: &SpectralFilter,
    f: &DVector<f64>,
) -> DVector<f64> {
    let mut f_hat = graph_fourier(&spectrum.eigenvectors, f);
    for (i, &lambda) in spectrum.eigenvalues.iter().enumerate() {
        let mut response = 0.0;
        let mut pow = 1.0;
        for &c in &filter.coeffs {
            response += c * pow;
            pow *= lambda;
        }
        f_hat[i] *= response;
    }
    inverse_fourier(&spectrum.eigenvectors, &f_hat)
}

/// One convolution layer: a shared polynomial filter over the propagation
/// operator, a channel-mixing map, and a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub coeffs: Vec<f64>,
    /// in_channels x out_channels.
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Stacked spectral-convolution network. Every layer applies
/// relu((Σ_k coeffs[k] L^k) X W + b) row-wise over the node dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnNetwork {
    pub layers: Vec<GcnLayer>,
}

/// Forward-pass cache: everything the reverse pass needs.
#[derive(Debug, Clone)]
pub struct GcnTrace {
    /// Per layer: propagated inputs T_k = L^k X for k = 0..=K.
    terms: Vec<Vec<DMatrix<f64>>>,
    /// Per layer: filtered input P = Σ_k coeffs[k] T_k.
    filtered: Vec<DMatrix<f64>>,
    /// Per layer: pre-activation Z = P W + b.
    pre: Vec<DMatrix<f64>>,
    /// Final activations.
    pub output: DMatrix<f64>,
}

/// Parameter gradients, same shapes as the network, plus the gradient with
/// respect to the input features for chaining into upstream encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnGradients {
    pub layers: Vec<GcnLayer>,
    pub input: DMatrix<f64>,
}

fn uniform_init(rng: &mut ChaCha8Rng, scale: f64) -> f64 {
    rng.random_range(-scale..=scale)
}

impl GcnNetwork {
    /// Builds a network with the given channel sizes (input first) and a
    /// shared filter order per layer. Parameters draw uniformly from
    /// [-s, s] with s the inverse square root of the tensor's fan-in.
    pub fn new(rng: &mut ChaCha8Rng, sizes: &[usize], order: usize) -> Self {
        assert!(sizes.len() >= 2, "at least input and output channel counts");
        let mut layers = Vec::new();
        for win in sizes.windows(2) {
            let (cin, cout) = (win[0], win[1]);
            let s_coeff = ((order + 1) as f64).sqrt().recip();
            let coeffs = (0..=order).map(|_| uniform_init(rng, s_coeff)).collect();
            let s = (cin as f64).sqrt().recip();
            let w = DMatrix::from_fn(cin, cout, |_, _| uniform_init(rng, s));
            let b = DVector::from_fn(cout, |_, _| uniform_init(rng, s));
            layers.push(GcnLayer { coeffs, w, b });
        }
        Self { layers }
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    /// Runs the stack over node features `x` (|N^P| rows) with propagation
    /// operator `l`, caching intermediates for the reverse pass.
    pub fn forward(&self, l: &DMatrix<f64>, x: &DMatrix<f64>) -> GcnTrace {
        assert_eq!(l.nrows(), x.nrows(), "one feature row per node");
        assert_eq!(x.ncols(), self.input_channels(), "input channel count");
        let mut terms = Vec::with_capacity(self.layers.len());
        let mut filtered = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let mut t = vec![h.clone()];
            for _ in 1..layer.coeffs.len() {
                let next = l * t.last().unwrap();
                t.push(next);
            }
            let mut p = DMatrix::zeros(h.nrows(), h.ncols());
            for (c, tk) in layer.coeffs.iter().zip(&t) {
                p += *c * tk;
            }
            let mut z = &p * &layer.w;
            for mut row in z.row_iter_mut() {
                row += layer.b.transpose();
            }
            h = z.map(|v| v.max(0.0));
            terms.push(t);
            filtered.push(p);
            pre.push(z);
        }
        GcnTrace { terms, filtered, pre, output: h }
    }

    /// Reverse-accumulation pass. `d_out` is the loss gradient at the
    /// output activations; the rectifier gate uses strict positivity, so
    /// a pre-activation sitting exactly at zero passes no gradient.
    pub fn backward(&self, l: &DMatrix<f64>, trace: &GcnTrace, d_out: &DMatrix<f64>) -> GcnGradients {
        assert_eq!(d_out.shape(), trace.output.shape(), "gradient matches output");
        let mut grads: Vec<GcnLayer> = Vec::with_capacity(self.layers.len());
        let mut d_h = d_out.clone();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[idx];
            let d_z = DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| {
                if z[(r, c)] > 0.0 {
                    d_h[(r, c)]
                } else {
                    0.0
                }
            });
            let d_b = DVector::from_iterator(
                d_z.ncols(),
                d_z.column_iter().map(|col| col.sum()),
            );
            let d_w = trace.filtered[idx].transpose() * &d_z;
            let d_p = &d_z * layer.w.transpose();
            let d_coeffs: Vec<f64> = trace.terms[idx]
                .iter()
                .map(|tk| tk.zip_fold(&d_p, 0.0, |acc, a, b| acc + a * b))
                .collect();
            // d/dX of Σ_k c_k L^k X is Σ_k c_k L^k applied to the upstream
            // gradient, because L is symmetric.
            let mut term = d_p.clone();
            let mut d_x = layer.coeffs[0] * &term;
            for &c in &layer.coeffs[1..] {
                term = l * term;
                d_x += c * &term;
            }
            grads.push(GcnLayer { coeffs: d_coeffs, w: d_w, b: d_b });
            d_h = d_x;
        }
        grads.reverse();
        GcnGradients { layers: grads, input: d_h }
    }

    /// Flat per-tensor views in a fixed order: for each layer, filter
    /// coefficients, then the channel mix (column-major), then the bias.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for i in 0..self.layers.len() {
            names.push(format!("layer{i}.coeffs"));
            names.push(format!("layer{i}.w"));
            names.push(format!("layer{i}.b"));
        }
        names
    }

    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::new();
        for layer in &self.layers {
            shapes.push((layer.coeffs.len(), 1));
            shapes.push((layer.w.nrows(), layer.w.ncols()));
            shapes.push((layer.b.len(), 1));
        }
        shapes
    }

    pub fn tensor_data(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(layer.coeffs.clone());
            out.push(layer.w.as_slice().to_vec());
            out.push(layer.b.as_slice().to_vec());
        }
        out
    }

    /// Overwrites every parameter from flat tensors in `tensor_data` order.
    pub fn load_tensor_data(&mut self, data: &[Vec<f64>]) {
        assert_eq!(data.len(), self.layers.len() * 3, "one entry per tensor");
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let coeffs = &data[3 * i];
            let w = &data[3 * i + 1];
            let b = &data[3 * i + 2];
            assert_eq!(coeffs.len(), layer.coeffs.len());
            assert_eq!(w.len(), layer.w.len());
            assert_eq!(b.len(), layer.b.len());
            layer.coeffs.copy_from_slice(coeffs);
            layer.w.as_mut_slice().copy_from_slice(w);
            layer.b.as_mut_slice().copy_from_slice(b);
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"VNEC";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes named tensors as a versioned binary checkpoint plus a plain-text
/// manifest (same path with ".txt" appended) listing shapes and norms.
/// Layout: magic, version, tensor count, then per tensor a name, its
/// (rows, cols) shape, and the little-endian 64-bit-float payload.
pub fn save_checkpoint(
    path: &Path,
    tensors: &[(String, (usize, usize), Vec<f64>)],
) -> io::Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let mut manifest = String::from("name rows cols l2_norm\n");
    for (name, (rows, cols), data) in tensors {
        assert_eq!(rows * cols, data.len(), "shape matches payload");
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(*rows as u64).to_le_bytes());
        buf.extend_from_slice(&(*cols as u64).to_le_bytes());
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let norm = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        writeln!(manifest, "{name} {rows} {cols} {norm:.6}").unwrap();
    }
    fs::File::create(path)?.write_all(&buf)?;
    let mut manifest_path = path.as_os_str().to_owned();
    manifest_path.push(".txt");
    fs::write(manifest_path, manifest)
}

fn read_exact_n(r: &mut impl Read, n: usize) -> io::Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

/// Reads a checkpoint written by `save_checkpoint`, validating the header.
pub fn load_checkpoint(path: &Path) -> io::Result<Vec<(String, (usize, usize), Vec<f64>)>> {
    let mut f = fs::File::open(path)?;
    let magic = read_exact_n(&mut f, 4)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(read_exact_n(&mut f, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad("unsupported checkpoint version"));
    }
    let count = u32::from_le_bytes(read_exact_n(&mut f, 4)?.try_into().unwrap());
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = u32::from_le_bytes(read_exact_n(&mut f, 4)?.try_into().unwrap());
        let name = String::from_utf8(read_exact_n(&mut f, name_len as usize)?)
            .map_err(|_| bad("tensor name is not utf-8"))?;
        let rows = u64::from_le_bytes(read_exact_n(&mut f, 8)?.try_into().unwrap()) as usize;
        let cols = u64::from_le_bytes(read_exact_n(&mut f, 8)?.try_into().unwrap()) as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| bad("tensor shape overflows"))?;
        let raw = read_exact_n(&mut f, n * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        out.push((name, (rows, cols), data));
    }
    let mut trailer = [0u8; 1];
    if f.read(&mut trailer)? != 0 {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{generate_substrate, stream_rng, WorkloadConfig, STREAM_SUBSTRATE};

    fn small_net(seed: u64, nodes: usize, links: usize) -> SubstrateNetwork {
        let cfg = WorkloadConfig {
            n_substrate_nodes: nodes,
            n_substrate_links: links,
            rng_seed: seed,
            ..WorkloadConfig::default()
        };
        generate_substrate(&cfg).unwrap()
    }

    fn path4_combinatorial() -> DMatrix<f64> {
        // Degree minus adjacency for the 4-node path 0-1-2-3.
        DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, -1.0, 0.0, 0.0, //
                -1.0, 2.0, -1.0, 0.0, //
                0.0, -1.0, 2.0, -1.0, //
                0.0, 0.0, -1.0, 1.0,
            ],
        )
    }

    #[test]
    fn spectrum_reconstructs_the_operator() {
        for seed in [1, 2, 3] {
            let net = small_net(seed, 9, 16);
            let sp = GraphSpectrum::of_substrate(&net);
            let n = net.node_count();
            // Ascending, nonnegative, bounded by 2 for the normalized form.
            for w in sp.eigenvalues.windows(2) {
                assert!(w[0] <= w[1]);
            }
            assert!(sp.eigenvalues[0] > -1e-9);
            assert!(*sp.eigenvalues.last().unwrap() < 2.0 + 1e-9);
            // Orthonormal columns.
            let gram = sp.eigenvectors.transpose() * &sp.eigenvectors;
            assert!((gram - DMatrix::<f64>::identity(n, n)).abs().max() < 1e-9);
            // U diag(lambda) U^T rebuilds L.
            let lambda = DMatrix::from_diagonal(&DVector::from_vec(sp.eigenvalues.clone()));
            let rebuilt = &sp.eigenvectors * lambda * sp.eigenvectors.transpose();
            assert!((rebuilt - &sp.laplacian).abs().max() < 1e-9);
        }
    }

    #[test]
    fn fourier_of_an_eigenvector_is_a_basis_vector() {
        let net = small_net(4, 7, 12);
        let sp = GraphSpectrum::of_substrate(&net);
        let f = sp.eigenvectors.column(1).clone_owned();
        let f_hat = graph_fourier(&sp.eigenvectors, &f);
        for i in 0..f_hat.len() {
            let expect = if i == 1 { 1.0 } else { 0.0 };
            assert!((f_hat[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn fourier_round_trip_recovers_the_signal() {
        let mut rng = stream_rng(11, STREAM_SUBSTRATE);
        for seed in [5, 6] {
            let net = small_net(seed, 8, 14);
            let sp = GraphSpectrum::of_substrate(&net);
            let f = DVector::from_fn(net.node_count(), |_, _| rng.random_range(-3.0..3.0));
            let back = inverse_fourier(&sp.eigenvectors, &graph_fourier(&sp.eigenvectors, &f));
            assert!((back - f).abs().max() < 1e-9);
        }
    }

    #[test]
    fn smooth_signals_concentrate_on_the_zero_eigenvalue() {
        // Combinatorial Laplacian of a path: the constant signal is exactly
        // the zero-eigenvalue direction.
        let sp = GraphSpectrum::from_laplacian(path4_combinatorial());
        assert!(sp.eigenvalues[0].abs() < 1e-9);
        let ones = DVector::from_element(4, 1.0);
        let f_hat = graph_fourier(&sp.eigenvectors, &ones);
        assert!((f_hat[0].abs() - 2.0).abs() < 1e-9, "mass sits on the first coefficient");
        for i in 1..4 {
            assert!(f_hat[i].abs() < 1e-9, "coefficient {i} vanishes");
        }

        // Normalized form: the smooth direction is the square-root-degree
        // signal instead of the constant one.
        let mut net = SubstrateNetwork::new();
        for _ in 0..4 {
            net.add_node(10);
        }
        net.add_link(0, 1, 10).unwrap();
        net.add_link(1, 2, 10).unwrap();
        net.add_link(2, 3, 10).unwrap();
        let sp = GraphSpectrum::of_substrate(&net);
        let degrees = [1.0f64, 2.0, 2.0, 1.0];
        let f = DVector::from_iterator(4, degrees.iter().map(|d| d.sqrt()));
        let f_hat = graph_fourier(&sp.eigenvectors, &f);
        for i in 1..4 {
            assert!(f_hat[i].abs() < 1e-9);
        }
    }

    #[test]
    fn constant_and_linear_filters_match_direct_products() {
        let net = small_net(7, 8, 13);
        let l = normalized_laplacian(&net);
        let mut rng = stream_rng(7, STREAM_SUBSTRATE);
        let f = DVector::from_fn(net.node_count(), |_, _| rng.random_range(-2.0..2.0));
        let scaled = spectral_conv(&l, &SpectralFilter { coeffs: vec![2.5] }, &f);
        assert!((scaled - 2.5 * &f).abs().max() < 1e-12);
        let lf = spectral_conv(&l, &SpectralFilter { coeffs: vec![0.0, 1.0] }, &f);
        assert!((lf - &l * &f).abs().max() < 1e-12);
    }

    #[test]
    fn polynomial_and_eigenbasis_paths_agree() {
        let mut rng = stream_rng(13, STREAM_SUBSTRATE);
        for (seed, nodes, links) in [(1, 8, 14), (2, 12, 24), (3, 16, 30)] {
            let net = small_net(seed, nodes, links);
            let sp = GraphSpectrum::of_substrate(&net);
            let filter = SpectralFilter {
                coeffs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            let f = DVector::from_fn(net.node_count(), |_, _| rng.random_range(-2.0..2.0));
            let fast = spectral_conv(&sp.laplacian, &filter, &f);
            let reference = spectral_conv_eigen(&sp, &filter, &f);
            let denom = reference.norm().max(1e-8);
            assert!((&fast - &reference).norm() / denom < 1e-6);
        }
    }

    #[test]
    fn single_layer_identity_mix_is_a_scaled_rectifier() {
        let net = small_net(9, 5, 7);
        let l = normalized_laplacian(&net);
        let mut rng = stream_rng(9, STREAM_SUBSTRATE);
        let mut gcn = GcnNetwork::new(&mut rng, &[3, 3], 0);
        gcn.layers[0].coeffs = vec![0.8];
        gcn.layers[0].w = DMatrix::identity(3, 3);
        gcn.layers[0].b = DVector::zeros(3);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-2.0..2.0));
        let out = gcn.forward(&l, &x).output;
        let expect = (0.8 * &x).map(|v| v.max(0.0));
        assert!((out - expect).abs().max() < 1e-12);
    }

    #[test]
    fn zero_features_produce_zero_preactivations() {
        let net = small_net(10, 6, 9);
        let l = normalized_laplacian(&net);
        let mut rng = stream_rng(10, STREAM_SUBSTRATE);
        let mut gcn = GcnNetwork::new(&mut rng, &[4, 8, 2], 2);
        for layer in &mut gcn.layers {
            layer.b = DVector::zeros(layer.b.len());
        }
        let x = DMatrix::zeros(6, 4);
        let trace = gcn.forward(&l, &x);
        for z in &trace.pre {
            assert!(z.abs().max() == 0.0);
        }
        assert!(trace.output.abs().max() == 0.0);
    }

    #[test]
    fn node_relabeling_permutes_output_rows() {
        let mut rng = stream_rng(21, STREAM_SUBSTRATE);
        for seed in 0..4 {
            let net = small_net(seed + 30, 6, 10);
            let l = normalized_laplacian(&net);
            let gcn = GcnNetwork::new(&mut rng, &[3, 5, 2], 2);
            let x = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
            let out = gcn.forward(&l, &x).output;

            // Apply a fixed relabeling pi as a permutation matrix.
            let pi = [2usize, 0, 5, 3, 1, 4];
            let mut p = DMatrix::zeros(6, 6);
            for (new, &old) in pi.iter().enumerate() {
                p[(new, old)] = 1.0;
            }
            let l_perm = &p * &l * p.transpose();
            let x_perm = &p * &x;
            let out_perm = gcn.forward(&l_perm, &x_perm).output;
            assert!((out_perm - p * out).abs().max() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn analytic_gradients_match_central_differences() {
        let net = small_net(17, 5, 8);
        let l = normalized_laplacian(&net);
        let mut rng = stream_rng(17, STREAM_SUBSTRATE);
        let mut gcn = GcnNetwork::new(&mut rng, &[3, 4, 2], 2);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.5..1.5));
        // Loss = sum of outputs weighted by a fixed random matrix.
        let r = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let loss = |g: &GcnNetwork| g.forward(&l, &x).output.zip_fold(&r, 0.0, |a, o, w| a + o * w);

        let trace = gcn.forward(&l, &x);
        let grads = gcn.backward(&l, &trace, &r);

        let eps = 1e-5;
        let mut checked = 0usize;
        let mut data = gcn.tensor_data();
        let analytic: Vec<Vec<f64>> = grads
            .layers
            .iter()
            .flat_map(|g| {
                [g.coeffs.clone(), g.w.as_slice().to_vec(), g.b.as_slice().to_vec()]
            })
            .collect();
        for t in 0..data.len() {
            for i in 0..data[t].len() {
                let orig = data[t][i];
                data[t][i] = orig + eps;
                gcn.load_tensor_data(&data);
                let up = loss(&gcn);
                data[t][i] = orig - eps;
                gcn.load_tensor_data(&data);
                let down = loss(&gcn);
                data[t][i] = orig;
                gcn.load_tensor_data(&data);
                let numeric = (up - down) / (2.0 * eps);
                let a = analytic[t][i];
                let rel = (numeric - a).abs() / (numeric.abs() + a.abs()).max(1e-8);
                assert!(rel < 1e-4, "tensor {t} entry {i}: numeric {numeric} analytic {a}");
                checked += 1;
            }
        }
        assert_eq!(checked, (3 + 12 + 4) + (3 + 8 + 2), "every parameter was checked");
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        let net = small_net(18, 5, 8);
        let l = normalized_laplacian(&net);
        let mut rng = stream_rng(18, STREAM_SUBSTRATE);
        let gcn = GcnNetwork::new(&mut rng, &[2, 3, 1], 1);
        let mut x = DMatrix::from_fn(5, 2, |_, _| rng.random_range(-1.0..1.0));
        let r = DMatrix::from_fn(5, 1, |_, _| rng.random_range(-1.0..1.0));
        let grads = gcn.backward(&l, &gcn.forward(&l, &x), &r);
        let eps = 1e-5;
        for row in 0..5 {
            for col in 0..2 {
                let orig = x[(row, col)];
                x[(row, col)] = orig + eps;
                let up = gcn.forward(&l, &x).output.zip_fold(&r, 0.0, |a, o, w| a + o * w);
                x[(row, col)] = orig - eps;
                let down = gcn.forward(&l, &x).output.zip_fold(&r, 0.0, |a, o, w| a + o * w);
                x[(row, col)] = orig;
                let numeric = (up - down) / (2.0 * eps);
                let a = grads.input[(row, col)];
                let rel = (numeric - a).abs() / (numeric.abs() + a.abs()).max(1e-8);
                assert!(rel < 1e-4, "input ({row},{col}): numeric {numeric} analytic {a}");
            }
        }
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let mut rng = stream_rng(23, STREAM_SUBSTRATE);
        let gcn = GcnNetwork::new(&mut rng, &[4, 6, 3], 2);
        let tensors: Vec<(String, (usize, usize), Vec<f64>)> = gcn
            .tensor_names()
            .into_iter()
            .zip(gcn.tensor_shapes())
            .zip(gcn.tensor_data())
            .map(|((name, shape), data)| (name, shape, data))
            .collect();
        save_checkpoint(&path, &tensors).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, tensors);
        let manifest = fs::read_to_string(dir.path().join("model.bin.txt")).unwrap();
        assert!(manifest.contains("layer0.w"));

        // A corrupted magic byte is rejected.
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] ^= 0xff;
        fs::write(&path, bytes).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn same_seed_builds_the_same_network() {
        let a = GcnNetwork::new(&mut stream_rng(31, STREAM_SUBSTRATE), &[5, 16, 8], 2);
        let b = GcnNetwork::new(&mut stream_rng(31, STREAM_SUBSTRATE), &[5, 16, 8], 2);
        assert_eq!(a, b);
    }
}
