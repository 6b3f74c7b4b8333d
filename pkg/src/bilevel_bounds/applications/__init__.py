"""Application problems: closed-form quadratic bilevel models and the
learned-regularization logistic model."""
from .learn2reg import (
    Dataset,
    Learn2Reg,
    learn2reg,
    load_dataset,
    penalty_direction,
    solve_lower,
    synth_textlike,
    validation_loss,
    write_dataset,
)
from .quadratic import (
    ClosedFormQuadratic,
    TaskCollection,
    graph_energy,
    meta_linreg,
    path_laplacian,
    stackelberg_regression,
)
from .toys import decoupled_problem, random_quadratic_problem, saddle_problem
