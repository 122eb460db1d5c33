"""scikit-learn style wrappers around the training loop."""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .autodiff import Network
from .jacnorm import frob_sq, spectral_norms
from .objectives import RegularizerSpec
from .operators import NoiseModel
from .training import TrainConfig, empirical_lipschitz, predict, train


class MeasurementTransformer(TransformerMixin, BaseEstimator):
    """Map signals ``x`` to measurements ``A x + n`` with ``||n|| = eta``.

    Stateless apart from the operator; ``fit`` only checks widths.
    """

    def __init__(self, operator=None, eta=0.0, random_state=None):
        self.operator = operator
        self.eta = eta
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        if self.operator is None:
            raise ValueError("MeasurementTransformer needs an operator")
        if X.shape[1] != self.operator.in_dim:
            raise ValueError(f"signals have width {X.shape[1]}, operator expects {self.operator.in_dim}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        Y = self.operator.apply(X)
        if self.eta > 0:
            Y = Y + NoiseModel(self.eta).sample(Y.shape, np.random.default_rng(self.random_state))
        return Y


class JacobianRegularizedRegressor(RegressorMixin, BaseEstimator):
    """Fully connected ReLU reconstruction network ``f: y -> x``.

    ``fit(Y, X)`` trains on measurements ``Y`` and ground-truth signals
    ``X`` with the chosen penalty. Families that involve ``J A`` need
    ``operator``. After fitting, ``network_`` holds the trained net and
    ``history_`` the per-evaluation :class:`~jacreg.training.MetricsRecord`s.
    """

    def __init__(
        self,
        operator=None,
        depth=3,
        hidden=None,
        regularizer="none",
        lambda1=0.0,
        lambda2=0.0,
        adaptive=False,
        step_fraction=1.0,
        power_iters=3,
        n_proj=1,
        epochs=10,
        batch_size=50,
        optimizer="adam",
        learning_rate=1e-3,
        eval_every=1,
        lipschitz_iters=10,
        image_shape=None,
        random_state=0,
    ):
        self.operator = operator
        self.depth = depth
        self.hidden = hidden
        self.regularizer = regularizer
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.adaptive = adaptive
        self.step_fraction = step_fraction
        self.power_iters = power_iters
        self.n_proj = n_proj
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.eval_every = eval_every
        self.lipschitz_iters = lipschitz_iters
        self.image_shape = image_shape
        self.random_state = random_state

    def _spec(self):
        return RegularizerSpec(
            family=self.regularizer,
            lambda1=self.lambda1,
            lambda2=self.lambda2,
            adaptive=self.adaptive,
            step_fraction=self.step_fraction,
            power_iters=self.power_iters,
            n_proj=self.n_proj,
        )

    def fit(self, Y, X, eval_set=None):
        """Train on measurements ``Y`` and targets ``X``; ``eval_set=(Y_test, X_test)``."""
        Y, X = check_X_y(Y, X, multi_output=True, y_numeric=True)
        X = X.reshape(len(X), -1)
        if self.operator is not None and Y.shape[1] != self.operator.out_dim:
            raise ValueError(
                f"measurements have width {Y.shape[1]}, operator produces {self.operator.out_dim}"
            )
        seed = self.random_state if self.random_state is not None else 0
        cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            learning_rate=self.learning_rate,
            seed=seed,
            regularizer=self._spec(),
            eval_every=self.eval_every,
            lipschitz_iters=self.lipschitz_iters,
            record_wall_time=False,
        )
        q, p = Y.shape[1], X.shape[1]
        width = self.hidden or p
        net = Network.from_sizes([q] + [width] * (self.depth - 1) + [p], rng=seed)
        Y_test = X_test = None
        if eval_set is not None:
            Y_test, X_test = check_X_y(*eval_set, multi_output=True, y_numeric=True)
            X_test = X_test.reshape(len(X_test), -1)
        self.network_, self.history_ = train(
            net, X, Y, self.operator, cfg, X_test, Y_test, image_shape=self.image_shape
        )
        self.n_features_in_ = q
        return self

    def predict(self, Y):
        check_is_fitted(self, "network_")
        Y = check_array(Y)
        return predict(self.network_, Y)

    def spectral_norms(self, Y, with_operator=False, n_iters=None, random_state=0):
        """Per-sample estimates of ``||J(y)||_2`` (or ``||J(y) A||_2``)."""
        check_is_fitted(self, "network_")
        A = self._operator_for(with_operator)
        n = n_iters or self.power_iters
        return spectral_norms(self.network_, check_array(Y), A, n, random_state)

    def frobenius_norms_sq(self, Y, with_operator=False, n_proj=None, random_state=0):
        """Per-sample projection estimates of ``||J(y)||_F^2`` (or ``||J(y) A||_F^2``)."""
        check_is_fitted(self, "network_")
        A = self._operator_for(with_operator)
        n = n_proj or self.n_proj
        return frob_sq(self.network_, check_array(Y), A, n, random_state, per_sample=True)

    def lipschitz(self, Y, n_iters=None, random_state=0):
        """Empirical ``(Lambda_f, Lambda_{f o a})`` over the rows of ``Y``."""
        check_is_fitted(self, "network_")
        n = n_iters or self.lipschitz_iters
        return empirical_lipschitz(self.network_, check_array(Y), self.operator, n, random_state)

    def _operator_for(self, with_operator):
        if not with_operator:
            return None
        if self.operator is None:
            raise ValueError("no operator configured")
        return self.operator
