"""
Scoring one examinee on the fraction model
==========================================

Fix the population and task parameters, then absorb one examinee's
responses task by task and read off skill mastery probabilities.
"""

import numpy as np

from bnassess import builtin_fraction_assets, score_examinee
from bnassess.fragments import Observation, absorb, init_belief, marginal

# the bundled model: five reporting skills, 15 items, 6 evidence models
model = builtin_fraction_assets()
graph = model.graph
print(graph.names, graph.state_space_size)

# point estimates: prior means for the population, a common
# misclassification pair for every task
lam = graph.prior_mean_lambda()
model = model.with_pi({t: (0.2, 0.85) for t in model.task_ids})

# an examinee who gets every item needing skill 2 wrong and the rest right
needs2 = {t for t in model.task_ids if model.q_row(t).skills_required[1]}
responses = {t: 0 if t in needs2 else 1 for t in model.task_ids}
print(score_examinee(model, lam, responses).to_text())

# the same update done by hand, one fragment at a time
belief = init_belief(graph, lam)
for t, x in responses.items():
    belief = absorb(belief, model, Observation(t, x))
print("P(theta2 = 1) =", round(float(marginal(belief, "theta2")[1]), 4))

# the full posterior over the 24 joint configurations
top = np.argsort(belief.probs)[::-1][:3]
for k in top:
    print(dict(zip(graph.names, graph.configurations[k].tolist())), round(float(belief.probs[k]), 4))
