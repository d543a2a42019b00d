"""Multiple-choice question rendering from askable triplets."""

from __future__ import annotations

import numpy as np

from .types import ABSTAIN_TEXT, KGError, Question, Triplet, World


def render_question(world: World, triplet: Triplet, seed: int) -> Question:
    """Fill the relation template and attach two distractors plus the abstain option.

    Distractors come from tails of the same relation elsewhere in the world,
    excluding every true tail for this (head, relation) so no option is
    accidentally correct; same-category entities are the fallback pool.
    """
    head = world.entity(triplet.head)
    if not head.is_personal:
        raise KGError(f"triplet {triplet.key()} is not askable (head is {head.category})")
    tail = world.entity(triplet.tail)
    text = world.relation(triplet.relation).template.format(head=head.name)

    true_tails = {
        world.entity(t.tail).name
        for t in world.triplets
        if t.head == triplet.head and t.relation == triplet.relation
    }
    pool = sorted(
        {
            world.entity(t.tail).name
            for t in world.triplets
            if t.relation == triplet.relation and t.tail != triplet.tail
        }
        - true_tails
    )
    if len(pool) < 2:
        fallback = sorted(
            {e.name for e in world.entities if e.category == tail.category} - true_tails - set(pool)
        )
        pool = pool + fallback
    if len(pool) < 2:
        raise KGError(f"world cannot supply two distractors for {triplet.key()}")

    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(len(pool), size=2, replace=False)
    answers = [tail.name, pool[int(picks[0])], pool[int(picks[1])]]
    order = rng.permutation(3)
    labels = ("A", "B", "C")
    options = {labels[i]: answers[int(order[i])] for i in range(3)}
    options["D"] = ABSTAIN_TEXT
    correct = labels[int(np.flatnonzero(order == 0)[0])]
    return Question(triplet=triplet, text=text, options=options, correct_label=correct)
