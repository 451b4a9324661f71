import enum

from collections import OrderedDict

# Named choices used in JSON configs and on the command line. Each is defined as an
# ordered list of 2-tuples. The first value in each tuple is the name of the enum member
# and the value that appears in configs. The second is a plain-text label for reports
# and --help output.

# Built-in reaction terms
NonlinearityKinds = OrderedDict((("example2_corrected", "f = F5·M − M^β/(M^β+1)·arctan ρ, g = G1·ρ + M·ρ/(ρ+1)"),
                                 ("example2_printed", "f = −F5·M + M^β/(M^β+1)·arctan ρ (sign as printed)"),
                                 ("custom", "programmatically supplied f̃ and g₂")))

# Time-stepping schemes. Only one exists, the enum reserves room.
Schemes = OrderedDict((("imex_upwind", "implicit ρ diffusion, explicit upwinded M transport"),))

# Studies the experiment harness knows how to run
Studies = OrderedDict((("dissipative", "absorbing-ball decay fit across initial amplitudes"),
                       ("pair", "Lipschitz and Hölder stability of perturbed pairs"),
                       ("smoothing", "contraction plus compact-term structure of S(T)"),
                       ("regularization", "convergence of the regularized system as n grows"),
                       ("propagation", "finite front speed against the non-degenerate contrast"),
                       ("dimension", "box-counting dimension of post-transient snapshots")))

# Families of initial data
InitialFamilies = OrderedDict((("bump", "compactly supported cosine bump"),
                               ("plateau", "flat top with smooth shoulders"),
                               ("trig", "random nonnegative trigonometric sum"),
                               ("zero", "M ≡ 0")))

# The reaction kinds are also carried as an enum in NonlinearitySpec. The other lists are
# only ever looked up by name.
NonlinearityKind = enum.Enum("NonlinearityKind", NonlinearityKinds)


class ExitCode(enum.IntEnum):
    '''
    Process exit status of the management commands. A stable contract, scripts depend on it.
    '''
    ok = 0  # success, every declared verdict passed
    verdict_failed = 1  # ran fine, a verdict (or validator) failed
    usage = 2  # bad arguments, unreadable or invalid config
    solver_failed = 3  # the time stepper aborted


class Verdict(enum.Enum):
    '''
    Outcome of a declared check in a report. "skipped" is for checks with insufficient
    data (a ladder of length 1, say), which neither pass nor fail a study.
    '''
    passed = "pass"
    failed = "fail"
    skipped = "skipped"
