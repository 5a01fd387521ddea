"""Online Monte-Carlo planning for the hidden-population formulations.

Each simulation draws one population vector from the Dirichlet belief (the
hidden parameter is static within an episode), descends the search tree with
UCB1, and bootstraps leaf returns with the exact solved value table instead
of random rollouts. The hot loop runs under numba on flat arrays; one plan
call is sequential, and separate calls are independent given their seeds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .domain import (
    Action,
    ClaimModel,
    DirichletBelief,
    DomainError,
    EvacState,
    Level,
    ModelParams,
    N_CATEGORIES,
    PopulationPrior,
    PriorityCategory,
    State,
    _Terminal,
    dirichlet_update,
    family_size_pmf,
    posterior_true_given_claim,
)
from .dp import ValueTable

__all__ = ["PlannerConfig", "PlanDiagnostics", "plan", "step_belief"]


@dataclass(frozen=True)
class PlannerConfig:
    iterations: int = 500
    max_depth: int = 120
    ucb_c: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise DomainError("iterations must be >= 1")
        if self.max_depth < 1:
            raise DomainError("max_depth must be >= 1")

    @classmethod
    def from_params(cls, params: ModelParams, seed: int = 0) -> "PlannerConfig":
        return cls(
            iterations=params.pomcp.iterations,
            max_depth=params.pomcp.max_depth,
            ucb_c=params.pomcp.ucb_c,
            seed=seed,
        )


@dataclass(frozen=True)
class PlanDiagnostics:
    """Root statistics of one plan call, serializable for the advisor UI."""

    action: Action
    q_accept: float
    q_reject: float
    n_accept: int
    n_reject: int
    belief_mean: np.ndarray

    def as_dict(self) -> dict:
        return {
            "action": self.action.name,
            "q": {"accept": self.q_accept, "reject": self.q_reject},
            "n": {"accept": self.n_accept, "reject": self.n_reject},
            "belief_mean": [float(x) for x in self.belief_mean],
        }


@njit(cache=True)
def _plan_kernel(
    gen,
    c0,
    t0,
    f0,
    obs0,
    level3,
    alpha,
    fwd,
    fwd_cdf,
    fam_cdf,
    rewards,
    eps,
    p_board,
    w,
    leaf_reward,
    c_lo,
    iterations,
    max_depth,
    ucb_c,
):
    n_cat = alpha.shape[0]
    n_f = fam_cdf.shape[0]
    n_obs = n_f * n_cat
    max_nodes = iterations + 2
    node_visits = np.zeros(max_nodes, np.int64)
    act_visits = np.zeros((max_nodes, 2), np.int64)
    act_value = np.zeros((max_nodes, 2), np.float64)
    children = np.full((max_nodes, 2, n_obs), -1, np.int32)
    n_nodes = 1

    theta = np.empty(n_cat)
    theta_cdf = np.empty(n_cat)
    post = np.empty(n_cat)
    path_cap = max_depth + 2
    path_node = np.empty(path_cap, np.int64)
    path_act = np.empty(path_cap, np.int64)
    path_rew = np.empty(path_cap, np.float64)

    for _ in range(iterations):
        # one population vector per simulation; the hidden parameter is static
        total = 0.0
        for k in range(n_cat):
            theta[k] = gen.gamma(alpha[k])
            total += theta[k]
        if total <= 0.0:
            for k in range(n_cat):
                theta[k] = 1.0 / n_cat
            total = 1.0
        acc = 0.0
        for k in range(n_cat):
            acc += theta[k] / total
            theta_cdf[k] = acc

        if level3:
            psum = 0.0
            for k in range(n_cat):
                post[k] = fwd[k, obs0] * theta[k]
                psum += post[k]
            if psum <= 0.0:
                v_true = obs0
            else:
                u = gen.random() * psum
                run = 0.0
                v_true = n_cat - 1
                for k in range(n_cat):
                    run += post[k]
                    if u < run:
                        v_true = k
                        break
        else:
            v_true = obs0

        c, t, f = c0, t0, f0
        node = 0
        depth = 0
        plen = 0
        bootstrap = 0.0
        while True:
            if act_visits[node, 1] == 0:
                a = 1
            elif act_visits[node, 0] == 0:
                a = 0
            else:
                ln_n = np.log(node_visits[node])
                u0 = act_value[node, 0] + ucb_c * np.sqrt(ln_n / act_visits[node, 0])
                u1 = act_value[node, 1] + ucb_c * np.sqrt(ln_n / act_visits[node, 1])
                a = 1 if u1 >= u0 else 0
            r = 0.0
            c_next = c
            if a == 1:
                r = f * rewards[v_true] + eps
                if gen.random() < p_board:
                    c_next = c - f
            path_node[plen] = node
            path_act[plen] = a
            path_rew[plen] = r
            plen += 1
            t_next = t - 1
            if c_next <= 0 or t_next == 0:
                break
            v2 = 0
            u = gen.random()
            while v2 < n_cat - 1 and theta_cdf[v2] <= u:
                v2 += 1
            f2 = 1
            u = gen.random()
            while f2 < n_f and fam_cdf[f2 - 1] <= u:
                f2 += 1
            if level3:
                obs2 = 0
                u = gen.random()
                while obs2 < n_cat - 1 and fwd_cdf[v2, obs2] <= u:
                    obs2 += 1
            else:
                obs2 = v2
            depth += 1
            key = (f2 - 1) * n_cat + obs2
            child = children[node, a, key]
            if depth >= max_depth or child < 0:
                if child < 0:
                    children[node, a, key] = n_nodes
                    n_nodes += 1
                w_same = w[c_next - c_lo, t_next - 1]
                q_rej = w_same
                q_acc = (
                    leaf_reward[f2 - 1, obs2]
                    + p_board * w[c_next - f2 - c_lo, t_next - 1]
                    + (1.0 - p_board) * w_same
                )
                bootstrap = q_acc if q_acc > q_rej else q_rej
                break
            node = child
            c, t, f, v_true = c_next, t_next, f2, v2

        ret = bootstrap
        for i in range(plen - 1, -1, -1):
            ret = path_rew[i] + ret
            nd = path_node[i]
            aa = path_act[i]
            node_visits[nd] += 1
            act_visits[nd, aa] += 1
            act_value[nd, aa] += (ret - act_value[nd, aa]) / act_visits[nd, aa]

    return act_value[0, 0], act_value[0, 1], act_visits[0, 0], act_visits[0, 1]


_model_cache: dict[tuple[bytes, str], tuple] = {}


def _kernel_inputs(params: ModelParams, table: ValueTable):
    key = (table.digest, table.level.value)
    cached = _model_cache.get(key)
    if cached is None:
        claim = ClaimModel.from_params(params)
        cached = (
            np.ascontiguousarray(claim.forward),
            np.ascontiguousarray(np.cumsum(claim.forward, axis=1)),
            np.ascontiguousarray(np.cumsum(family_size_pmf(params))),
            np.asarray(params.rewards, dtype=float),
            np.ascontiguousarray(table.w),
            np.ascontiguousarray(table.accept_reward),
        )
        _model_cache[key] = cached
    return cached


def plan(
    level: Level,
    belief: DirichletBelief,
    obs_state: State,
    mdp_value: ValueTable,
    cfg: PlannerConfig,
    params: ModelParams,
) -> tuple[Action, PlanDiagnostics]:
    """Pick an action for the current observed arrival via tree search.

    Level IIa treats claims as true and hides only the population distribution
    (leaf values come from the Level I table); Level III additionally samples
    the arrival's true category from its claim posterior each simulation and
    bootstraps with the Level IIb table.
    """
    if isinstance(obs_state, _Terminal):
        raise DomainError("cannot plan from the terminal state")
    if level == Level.IIA:
        required = Level.I
    elif level == Level.III:
        required = Level.IIB
    else:
        raise DomainError(f"online planning supports levels IIa and III, not {level.value}")
    if mdp_value.level != required:
        raise DomainError(
            f"level {level.value} planning needs the {required.value} value table, "
            f"got {mdp_value.level.value}"
        )
    if mdp_value.digest != params.digest():
        raise DomainError("value table was solved under different params (digest mismatch)")
    mdp_value.space.state_index(obs_state)  # range check

    belief_mean = belief.mean()
    if obs_state.is_preterminal():
        diag = PlanDiagnostics(Action.REJECT, 0.0, 0.0, 0, 0, belief_mean)
        return Action.REJECT, diag

    fwd, fwd_cdf, fam_cdf, rewards, w, leaf_reward = _kernel_inputs(params, mdp_value)
    gen = np.random.default_rng(cfg.seed)
    q_rej, q_acc, n_rej, n_acc = _plan_kernel(
        gen,
        obs_state.capacity,
        obs_state.time_left,
        obs_state.family_size,
        int(obs_state.category),
        level == Level.III,
        belief.alpha,
        fwd,
        fwd_cdf,
        fam_cdf,
        rewards,
        params.epsilon,
        params.p_board,
        w,
        leaf_reward,
        mdp_value.space.c_lo,
        cfg.iterations,
        cfg.max_depth,
        cfg.ucb_c,
    )
    action = Action.ACCEPT if q_acc >= q_rej else Action.REJECT
    diag = PlanDiagnostics(action, float(q_acc), float(q_rej), int(n_acc), int(n_rej), belief_mean)
    return action, diag


def step_belief(
    level: Level,
    belief: DirichletBelief,
    arrival: tuple[int, PriorityCategory],
    claim: ClaimModel,
    pop: PopulationPrior,
) -> DirichletBelief:
    """Fold one observed arrival into the population belief.

    Level IIa takes the claim at face value (hard count); Level III spreads
    the count over the claim posterior so misclaiming does not bias the belief.
    """
    _, claimed = arrival
    if level == Level.IIA:
        return dirichlet_update(belief, claimed)
    if level == Level.III:
        return dirichlet_update(belief, posterior_true_given_claim(claimed, pop, claim))
    raise DomainError(f"belief updates apply to levels IIa and III, not {level.value}")
