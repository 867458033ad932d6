"""How many simulations would multilevel splitting need for the same
precision?  The bound inverts the splitting cost and variance relations."""

from rare_sampler import splitting_bound

for rv in (0.00851, 0.00969):
    b = splitting_bound(p_gamma=0.01, delta=0.1, target_rv=rv)
    print(f"target RV {rv}: K={b.iterations} iterations, N={b.base_samples}, "
          f"at least {b.min_total_sims} simulations")

b = splitting_bound(p_gamma=0.01, delta=0.1, budget=2296)
print(f"with a budget of 2296 simulations: 100RV >= {100 * b.rv_lower_bound:.4f}")
