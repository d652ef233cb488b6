"""Shared test utilities: finite differences and tiny record builders."""

import numpy as np

from tsalign.datamodel import Domain, EmbeddingRecord, TimeSeriesPatch


def fd_gradient(f, x, h=1e-5):
    """Central-difference gradient of scalar f at x (float64, elementwise)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def max_rel_err(analytic, numeric, floor=1e-8):
    """Max elementwise relative error with a small absolute floor."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def network_fd_check(net, loss_fn, h=1e-5, floor=1e-6):
    """Compare loss_fn's analytic gradients to central differences.

    loss_fn(net) must return (loss, grads) with grads shaped like
    [(dW, db)] per layer. The network must be float64 for the comparison
    to be meaningful. Returns the max relative error over all parameters.
    """
    _, grads = loss_fn(net)
    worst = 0.0
    for layer_idx, layer in enumerate(net.layers):
        for param, grad in ((layer.weights, grads[layer_idx][0]),
                            (layer.bias, grads[layer_idx][1])):
            flat = param.ravel()
            gflat = np.asarray(grad, dtype=np.float64).ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                fp = loss_fn(net)[0]
                flat[i] = orig - h
                fm = loss_fn(net)[0]
                flat[i] = orig
                numeric = (fp - fm) / (2.0 * h)
                denom = max(abs(numeric), abs(gflat[i]), floor)
                worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


def make_patch(patch_id="p0", patient_id="pat0", domain=Domain.SOURCE,
               length=120, ga_weeks=30, seed=0, start_day=0):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 50.0, size=length)
    return TimeSeriesPatch(patch_id=patch_id, patient_id=patient_id,
                           domain=domain, values=values, ga_weeks=ga_weeks,
                           patch_start_day=start_day)


def make_records(n_per_domain=6, dim=4, gap=0.0, seed=0, ga_weeks=30):
    """Two labeled clouds of embedding records, optionally separated."""
    rng = np.random.default_rng(seed)
    records = []
    for domain, offset in ((Domain.SOURCE, 0.0), (Domain.TARGET, gap)):
        for i in range(n_per_domain):
            vec = rng.normal(0.0, 1.0, size=dim) + offset
            records.append(EmbeddingRecord(
                vector=vec,
                patient_id=f"{domain.value}-pat{i}",
                domain=domain,
                source_patch_id=f"{domain.value}-p{i}",
                ga_weeks=ga_weeks,
            ))
    return records
