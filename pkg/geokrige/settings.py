"""Settings for the geokrige package."""
#: Grid spacing of simulated random fields, in meters
GRID_RESOLUTION = 50.0

#: Largest grid (in nodes) simulated by exact Cholesky factorisation
CHOLESKY_MAX_NODES = 4096

#: Relative tolerance under which negative circulant eigenvalues are clipped
EMBEDDING_TOLERANCE = 1e-10

#: Number of embedding doublings tried before falling back to Cholesky
EMBEDDING_DOUBLINGS = 1

#: Number of equal-width lag bins of empirical variograms
N_BINS = 15

#: Maximum lag of empirical variograms, in meters
MAX_VGM_DIST = 1000.0

#: Maximum number of solver iterations when fitting variogram models
FIT_MAX_ITERATIONS = 200

#: Maximum number of alternations when fitting a coregionalization model
LMC_MAX_ITERATIONS = 500

#: Relative objective change that stops the coregionalization fit
LMC_TOLERANCE = 1e-8

#: The coregionalization range 3/theta is searched between half a bin width
#: and this many times the maximum variogram distance
LMC_MAX_RANGE_FACTOR = 10.0

#: Eigenvalues above this (negative) floor are accepted as positive
PSD_TOLERANCE = -1e-8

#: Variance threshold of the practical range definition log(sill/0.05)/theta
PRACTICAL_RANGE_THRESHOLD = 0.05

#: Validity screening of fitted models: range3 may not exceed this many
#: times the maximum variogram distance
VALIDITY_MAX_RANGE_FACTOR = 2.0

#: Validity screening: total sill may not exceed this many times the sample
#: variance
VALIDITY_MAX_SILL_FACTOR = 5.0

#: Validity screening: nugget may not exceed this share of the total sill
VALIDITY_MAX_NUGGET_SHARE = 0.95

#: Default neighborhood of local kriging
NEIGHBORHOOD_MAX_POINTS = 50
NEIGHBORHOOD_MAX_RADIUS = 1000.0
NEIGHBORHOOD_MIN_POINTS = 1

#: Number of fixed test points per scenario
N_TEST_POINTS = 200

#: Replications per scenario
N_REPLICATIONS = 5000
N_REPLICATIONS_MULTIVARIATE = 1000

#: Significant digits of numbers written to output CSV files
OUTPUT_DIGITS = 6

#: Environment variable consulted when --threads is not given
THREADS_ENV_VAR = 'GEOKRIGE_THREADS'

#: Case study defaults
CASE_STUDY_KNOWN_POINTS = (500, 1000, 2000, 5000, 'all')
CASE_STUDY_VGM_DISTANCES = (250.0, 500.0, 756.0, 1000.0, 1250.0)
CASE_STUDY_NEIGHBORS = 50
CASE_STUDY_MAX_BAD_ROWS = 0.01
CASE_STUDY_MIN_EXTRA_ROWS = 100

#: Exponential models of the three case-study surrogate variables, as
#: (nugget, partial sill, scale in meters)
SURROGATE_MODELS = ((0.0, 0.489, 249.71),
                    (0.0, 0.233, 209.682),
                    (0.001, 0.204, 225.641))

#: Surrogate dataset size, field extent and pairwise correlation
SURROGATE_POINTS = 7290
SURROGATE_EXTENT = 16000.0
SURROGATE_CORRELATION = 0.7
