use std::ops::Range;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use super::head::{fully_connected, global_average_pool, relu};
use super::conv::{conv_from_gathered, gather_neighborhoods, scatter_neighborhoods};
use super::norm::{self, BatchNormCache};
use super::pool::{pool_topology, PoolTrace};
use super::{reachable_edges, EdgeMesh, ModelConfig, NnError, ParamLayout};
use crate::mesh::EdgeAdjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in the norm layers; the tape supports backward.
    Train,
    /// Running statistics; samples are independent.
    Eval,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    /// Per norm layer: running mean then running variance.
    pub running: Vec<f64>,
}

struct SampleLayer {
    input: Array2<f64>,
    adjacency: EdgeAdjacency,
    gathered: Array2<f64>,
    /// ReLU output.
    active: Array2<f64>,
    trace: PoolTrace,
}

struct LayerTape {
    samples: Vec<SampleLayer>,
    bn: Option<BatchNormCache>,
}

struct HeadTape {
    edges: usize,
    pooled: Array1<f64>,
    hidden: Array1<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Branches {
    pub collapses: Vec<usize>,
    pub active: Vec<bool>,
}

/// Intermediate values of a forward pass, consumed by backward.
pub struct Tape {
    mode: Mode,
    layers: Vec<LayerTape>,
    head: Vec<HeadTape>,
}

impl Tape {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Discrete choices made by the pass: the collapse sequence of every
    /// pooling step and the sign pattern of every ReLU. The loss is smooth
    /// in the parameters only while this stays fixed.
    pub fn branches(&self) -> Branches {
        let mut b = Branches::default();
        for l in &self.layers {
            for s in &l.samples {
                b.collapses.extend(s.trace.collapses.iter().map(|c| c.edge));
                b.active.extend(s.active.iter().map(|&v| v > 0.0));
            }
        }
        for h in &self.head {
            b.active.extend(h.hidden.iter().map(|&v| v > 0.0));
        }
        b
    }

    /// Edge counts of every sample after each pooling layer.
    pub fn pooled_edge_counts(&self) -> Vec<Vec<usize>> {
        self.layers
            .iter()
            .map(|l| l.samples.iter().map(|s| s.trace.output_edges()).collect())
            .collect()
    }
}

fn add_into(acc: &mut [f64], x: ArrayView2<f64>) {
    for (a, v) in acc.iter_mut().zip(x.iter()) {
        *a += v;
    }
}

fn add_vec_into(acc: &mut [f64], x: ArrayView1<f64>) {
    for (a, v) in acc.iter_mut().zip(x.iter()) {
        *a += v;
    }
}

impl Network {
    pub fn new<R: Rng>(config: ModelConfig, rng: &mut R) -> Result<Self, NnError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let params = layout.init(rng);
        let running = Self::initial_running(&config);
        Ok(Self {
            config,
            layout,
            params,
            running,
        })
    }

    pub(crate) fn initial_running(config: &ModelConfig) -> Vec<f64> {
        let mut r = Vec::new();
        for &c in &config.conv_channels {
            r.extend(std::iter::repeat_n(0.0, c));
            r.extend(std::iter::repeat_n(1.0, c));
        }
        r
    }

    fn running_ranges(&self, l: usize) -> (Range<usize>, Range<usize>) {
        let offset: usize = self.config.conv_channels[..l].iter().map(|c| 2 * c).sum();
        let c = self.config.conv_channels[l];
        (offset..offset + c, offset + c..offset + 2 * c)
    }

    fn tensor(&self, name: &str) -> &[f64] {
        &self.params[self.layout.range(name)]
    }

    fn matrix(&self, name: &str) -> ArrayView2<'_, f64> {
        let e = self.layout.get(name);
        ArrayView2::from_shape((e.shape[0], e.shape[1]), &self.params[e.range()]).expect("layout shape")
    }

    fn vector(&self, name: &str) -> ArrayView1<'_, f64> {
        ArrayView1::from(self.tensor(name))
    }

    fn check_input(&self, mesh: &EdgeMesh, x: &Array2<f64>) -> Result<(), NnError> {
        if x.nrows() != self.config.input_channels {
            return Err(NnError::Shape(format!(
                "expected {} input channels, got {}",
                self.config.input_channels,
                x.nrows()
            )));
        }
        let want = reachable_edges(self.config.input_edges);
        if mesh.edge_count() != want || x.ncols() != want {
            return Err(NnError::Shape(format!(
                "expected meshes with {want} edges (budget {}), got mesh {} / features {}",
                self.config.input_edges,
                mesh.edge_count(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn batch_norm(
        &self,
        l: usize,
        xs: &[Array2<f64>],
        mode: Mode,
    ) -> (Vec<Array2<f64>>, Option<BatchNormCache>) {
        let (rm, rv) = self.running_ranges(l);
        norm::batch_norm_forward(
            xs,
            self.tensor(&format!("bn{l}.gamma")),
            self.tensor(&format!("bn{l}.beta")),
            &self.running[rm],
            &self.running[rv],
            mode == Mode::Train,
        )
    }

    /// Logits (`batch x 2`) for a batch of meshes and their feature
    /// matrices, plus the tape needed for backward.
    pub fn forward(
        &self,
        batch: &[(&EdgeMesh, &Array2<f64>)],
        mode: Mode,
    ) -> Result<(Array2<f64>, Tape), NnError> {
        if batch.is_empty() {
            return Err(NnError::Shape("empty batch".into()));
        }
        for (m, x) in batch {
            self.check_input(m, x)?;
        }

        let mut meshes: Vec<EdgeMesh> = batch.iter().map(|(m, _)| (*m).clone()).collect();
        let mut xs: Vec<Array2<f64>> = batch.iter().map(|(_, x)| (*x).clone()).collect();
        let mut layers = Vec::with_capacity(self.config.layers());

        for l in 0..self.config.layers() {
            let kernel = self.matrix(&format!("conv{l}.kernel"));
            let bias = self.vector(&format!("conv{l}.bias"));
            let target = self.config.pool_targets[l];

            let convolved: Vec<(Array2<f64>, Array2<f64>)> = xs
                .par_iter()
                .zip(meshes.par_iter())
                .map(|(x, m)| {
                    let g = gather_neighborhoods(x.view(), &m.adjacency)?;
                    let a = conv_from_gathered(&g, kernel, bias).mapv(|v| v.max(0.0));
                    Ok((g, a))
                })
                .collect::<Result<_, NnError>>()?;
            let (gathered, active): (Vec<_>, Vec<_>) = convolved.into_iter().unzip();

            let (next_x, traces, next_meshes, bn) = if self.config.pool_before_norm {
                let pooled: Vec<(PoolTrace, EdgeMesh)> = active
                    .par_iter()
                    .zip(meshes.par_iter())
                    .map(|(a, m)| pool_topology(a.view(), m, target))
                    .collect::<Result<_, NnError>>()?;
                let (traces, next_meshes): (Vec<_>, Vec<_>) = pooled.into_iter().unzip();
                let p: Vec<Array2<f64>> = traces
                    .par_iter()
                    .zip(active.par_iter())
                    .map(|(t, a)| t.apply(a.view()))
                    .collect();
                let (y, bn) = self.batch_norm(l, &p, mode);
                (y, traces, next_meshes, bn)
            } else {
                let (y, bn) = self.batch_norm(l, &active, mode);
                let pooled: Vec<(PoolTrace, EdgeMesh, Array2<f64>)> = y
                    .par_iter()
                    .zip(meshes.par_iter())
                    .map(|(y, m)| {
                        let (t, nm) = pool_topology(y.view(), m, target)?;
                        let out = t.apply(y.view());
                        Ok((t, nm, out))
                    })
                    .collect::<Result<_, NnError>>()?;
                let mut traces = Vec::with_capacity(pooled.len());
                let mut next_meshes = Vec::with_capacity(pooled.len());
                let mut outs = Vec::with_capacity(pooled.len());
                for (t, m, o) in pooled {
                    traces.push(t);
                    next_meshes.push(m);
                    outs.push(o);
                }
                (outs, traces, next_meshes, bn)
            };

            let samples = xs
                .into_iter()
                .zip(meshes)
                .zip(gathered)
                .zip(active)
                .zip(traces)
                .map(|((((input, m), gathered), active), trace)| SampleLayer {
                    input,
                    adjacency: m.adjacency,
                    gathered,
                    active,
                    trace,
                })
                .collect();
            layers.push(LayerTape { samples, bn });
            xs = next_x;
            meshes = next_meshes;
        }

        let w1 = self.matrix("fc1.weight");
        let b1 = self.vector("fc1.bias");
        let w2 = self.matrix("fc2.weight");
        let b2 = self.vector("fc2.bias");
        let mut logits = Array2::zeros((batch.len(), self.config.n_classes));
        let mut head = Vec::with_capacity(batch.len());
        for (i, x) in xs.iter().enumerate() {
            let pooled = global_average_pool(x.view());
            let hidden = relu(&fully_connected(pooled.view(), w1, b1));
            let out = fully_connected(hidden.view(), w2, b2);
            logits.row_mut(i).assign(&out);
            head.push(HeadTape {
                edges: x.ncols(),
                pooled,
                hidden,
            });
        }
        Ok((logits, Tape { mode, layers, head }))
    }

    /// Gradient of `sum(dlogits * logits)` with respect to every parameter,
    /// in [`ParamLayout`] order.
    pub fn backward(&self, tape: &Tape, dlogits: ArrayView2<f64>) -> Result<Vec<f64>, NnError> {
        if tape.mode != Mode::Train {
            return Err(NnError::Shape("backward needs a training-mode tape".into()));
        }
        if dlogits.nrows() != tape.head.len() {
            return Err(NnError::Shape("dlogits rows do not match the batch".into()));
        }
        let mut grad = vec![0.0; self.layout.total];
        let w1 = self.matrix("fc1.weight");
        let w2 = self.matrix("fc2.weight");

        // head
        let mut dxs: Vec<Array2<f64>> = Vec::with_capacity(tape.head.len());
        {
            let (r_w1, r_b1) = (self.layout.range("fc1.weight"), self.layout.range("fc1.bias"));
            let (r_w2, r_b2) = (self.layout.range("fc2.weight"), self.layout.range("fc2.bias"));
            for (i, h) in tape.head.iter().enumerate() {
                let dout = dlogits.row(i);
                let dw2 = outer(dout, h.hidden.view());
                add_into(&mut grad[r_w2.clone()], dw2.view());
                add_vec_into(&mut grad[r_b2.clone()], dout);
                let mut dhidden = w2.t().dot(&dout);
                for (d, &a) in dhidden.iter_mut().zip(h.hidden.iter()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
                let dw1 = outer(dhidden.view(), h.pooled.view());
                add_into(&mut grad[r_w1.clone()], dw1.view());
                add_vec_into(&mut grad[r_b1.clone()], dhidden.view());
                let dpooled = w1.t().dot(&dhidden) / h.edges as f64;
                let dx = dpooled
                    .insert_axis(Axis(1))
                    .broadcast((h.pooled.len(), h.edges))
                    .expect("broadcast")
                    .to_owned();
                dxs.push(dx);
            }
        }

        for l in (0..self.config.layers()).rev() {
            let layer = &tape.layers[l];
            let bn = layer.bn.as_ref().expect("training tape");
            let gamma = self.tensor(&format!("bn{l}.gamma"));
            let kernel = self.matrix(&format!("conv{l}.kernel"));

            let dactive: Vec<Array2<f64>> = if self.config.pool_before_norm {
                let (dp, dgamma, dbeta) = self.bn_backward(&dxs, gamma, bn);
                self.add_bn_grads(&mut grad, l, &dgamma, &dbeta);
                dp.par_iter()
                    .zip(layer.samples.par_iter())
                    .map(|(d, s)| s.trace.backward(d.view()))
                    .collect()
            } else {
                let dy: Vec<Array2<f64>> = dxs
                    .par_iter()
                    .zip(layer.samples.par_iter())
                    .map(|(d, s)| s.trace.backward(d.view()))
                    .collect();
                let (da, dgamma, dbeta) = self.bn_backward(&dy, gamma, bn);
                self.add_bn_grads(&mut grad, l, &dgamma, &dbeta);
                da
            };

            let need_dx = l > 0;
            let per_sample: Vec<(Array2<f64>, Array1<f64>, Option<Array2<f64>>)> = dactive
                .into_par_iter()
                .zip(layer.samples.par_iter())
                .map(|(mut dz, s)| {
                    ndarray::Zip::from(&mut dz)
                        .and(&s.active)
                        .for_each(|d, &a| {
                            if a <= 0.0 {
                                *d = 0.0;
                            }
                        });
                    let dkernel = dz.dot(&s.gathered.t());
                    let dbias = dz.sum_axis(Axis(1));
                    let dx = need_dx.then(|| {
                        let dg = kernel.t().dot(&dz);
                        scatter_neighborhoods(s.input.view(), &s.adjacency, &dg)
                    });
                    (dkernel, dbias, dx)
                })
                .collect();
            let rk = self.layout.range(&format!("conv{l}.kernel"));
            let rb = self.layout.range(&format!("conv{l}.bias"));
            dxs = Vec::with_capacity(per_sample.len());
            for (dk, db, dx) in per_sample {
                add_into(&mut grad[rk.clone()], dk.view());
                add_vec_into(&mut grad[rb.clone()], db.view());
                if let Some(dx) = dx {
                    dxs.push(dx);
                }
            }
        }
        Ok(grad)
    }

    fn bn_backward(
        &self,
        dys: &[Array2<f64>],
        gamma: &[f64],
        cache: &BatchNormCache,
    ) -> (Vec<Array2<f64>>, Array1<f64>, Array1<f64>) {
        let partial: Vec<(Array1<f64>, Array1<f64>)> = dys
            .par_iter()
            .zip(cache.x_hat.par_iter())
            .map(|(dy, h)| norm::partial_sums(dy, h))
            .collect();
        let c = gamma.len();
        let mut sum_dy = Array1::zeros(c);
        let mut sum_dy_xhat = Array1::zeros(c);
        for (a, b) in &partial {
            sum_dy += a;
            sum_dy_xhat += b;
        }
        let dxs = dys
            .par_iter()
            .zip(cache.x_hat.par_iter())
            .map(|(dy, h)| norm::input_grad(dy, h, gamma, cache, &sum_dy, &sum_dy_xhat))
            .collect();
        (dxs, sum_dy_xhat, sum_dy)
    }

    fn add_bn_grads(&self, grad: &mut [f64], l: usize, dgamma: &Array1<f64>, dbeta: &Array1<f64>) {
        add_vec_into(&mut grad[self.layout.range(&format!("bn{l}.gamma"))], dgamma.view());
        add_vec_into(&mut grad[self.layout.range(&format!("bn{l}.beta"))], dbeta.view());
    }

    /// Folds the batch statistics of a training tape into the running
    /// estimates.
    pub fn update_running_stats(&mut self, tape: &Tape) {
        for (l, layer) in tape.layers.iter().enumerate() {
            if let Some(cache) = &layer.bn {
                let (rm, rv) = self.running_ranges(l);
                let (means, vars) = self.running.split_at_mut(rv.start);
                norm::update_running(&mut means[rm], &mut vars[..rv.len()], cache);
            }
        }
    }

    /// Growing-class probabilities in inference mode.
    pub fn predict_proba(&self, batch: &[(&EdgeMesh, &Array2<f64>)]) -> Result<Vec<f64>, NnError> {
        let mut out = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(16) {
            let (logits, _) = self.forward(chunk, Mode::Eval)?;
            for row in logits.rows() {
                out.push(super::softmax(row)[1]);
            }
        }
        Ok(out)
    }
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut m = Array2::zeros((a.len(), b.len()));
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            m[[i, j]] = x * y;
        }
    }
    m
}
