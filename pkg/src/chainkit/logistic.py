"""Bayesian logistic regression: synthetic data and the posterior potential."""

import numpy as np

from chainkit import rng
from chainkit.errors import ShapeError

__all__ = ['generate_dataset', 'make_logistic_regression_target']

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -z))


def generate_dataset(seed: int, num_points: int, num_features: int):
    """Draws ``(features, labels)`` from the model's own generative story.

    Features are i.i.d. standard normal, the true weights come from the
    standard-normal prior and labels are Bernoulli on the resulting logits.
    """
    features_key, weights_key, labels_key = rng.split(rng.key_from_seed(seed),
                                                      3)
    features = rng.normal_sample(features_key, (num_points, num_features))
    true_weights = rng.normal_sample(weights_key, (num_features,))
    p = _sigmoid(features @ true_weights)
    labels = (rng.uniform_sample(labels_key, (num_points,)) < p).astype(
        np.float64)
    return features, labels


def make_logistic_regression_target(features, labels):
    """Posterior potential over weights ``w`` of shape ``[C, D]``.

    Standard-normal prior on each weight, Bernoulli likelihood on
    ``logits = w @ features.T``. The side output is the ``[C, N]`` logits.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if features.ndim != 2 or labels.shape != features.shape[:1]:
        raise ShapeError(
            f'features must be [N, D] and labels [N], got {features.shape} '
            f'and {labels.shape}')
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError('labels must be 0 or 1')
    num_features = features.shape[1]

    def target_log_prob_fn(w):
        w = np.asarray(w, dtype=np.float64)
        if w.ndim != 2 or w.shape[1] != num_features:
            raise ShapeError(f'expected weights [C, {num_features}], got '
                             f'{w.shape}')
        logits = w @ features.T
        log_prior = -0.5 * np.sum(w * w, axis=1) - _HALF_LOG_2PI * num_features
        # y log s(z) + (1 - y) log(1 - s(z)) == y z - softplus(z)
        log_lik = np.sum(labels * logits - np.logaddexp(0.0, logits), axis=1)
        grad = -w + (labels - _sigmoid(logits)) @ features
        return log_prior + log_lik, grad, logits

    return target_log_prob_fn
