// Strict configuration parsing: defaults, invariant validation, unknown-key
// rejection with line diagnostics, and canonical echo-and-reparse equality.

#include <catch2/catch_amalgamated.hpp>

#include "chmech/config.hpp"

using namespace chmech;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("a minimal dynamic config parses with defaults expanded") {
  const std::string text = R"(
[problem]
mode = "dynamic"
dimension = 1

[mesh]
elements = [8]

[time]
T = 0.01
dt = 0.001
)";
  const ProblemConfig c = parse_config_text(text);
  CHECK(c.mode == RunMode::dynamic);
  CHECK(c.dimension == 1);
  CHECK(c.elements[0] == 8);
  CHECK(c.degree == 3);
  CHECK(c.quadrature == 4);  // resolved from degree + 1
  CHECK(c.scheme == "backward-euler");
  CHECK(c.T == 0.01);
  CHECK(c.dt == 0.001);
  CHECK(c.out_dir == "out");
  CHECK(c.volume() == 1.0);
  CHECK(c.total_content() == 1.0);  // uniform default concentration
}

TEST_CASE("growth-condition violations are rejected with the invariant named") {
  const std::string text = R"(
[problem]
mode = "static"
dimension = 2

[mesh]
elements = [4, 4]

[material]
barrier_exponent = 3.0
static_exponent = 4.0
)";
  CHECK_THROWS_AS(parse_config_text(text), ValidationError);
  CHECK_THROWS_WITH(parse_config_text(text), ContainsSubstring("q > p*d/(p - d)"));
}

TEST_CASE("misspelled keys and unknown sections are parse errors with location") {
  CHECK_THROWS_WITH(parse_config_text("[mesh]\ndegre = 3\n"),
                    ContainsSubstring("degre"));
  CHECK_THROWS_WITH(parse_config_text("[mesh]\ndegre = 3\n"), ContainsSubstring("line 2"));
  CHECK_THROWS_AS(parse_config_text("[mesh]\ndegre = 3\n"), ParseError);

  CHECK_THROWS_WITH(parse_config_text("[mesch]\nelements = [4]\n"),
                    ContainsSubstring("mesch"));
  CHECK_THROWS_WITH(parse_config_text("[time]\nT = 0.1\nT = 0.2\n"),
                    ContainsSubstring("duplicate"));
  CHECK_THROWS_WITH(parse_config_text("[time]\nT = 0.1\n[time]\ndt = 1e-3\n"),
                    ContainsSubstring("reopened"));
  CHECK_THROWS_WITH(parse_config_text("T = 0.1\n"), ContainsSubstring("outside"));
}

TEST_CASE("value types are checked strictly") {
  CHECK_THROWS_AS(parse_config_text("[time]\nT = fast\n"), ParseError);
  CHECK_THROWS_AS(parse_config_text("[problem]\nmode = dynamic\n"), ParseError);
  CHECK_THROWS_AS(parse_config_text("[problem]\nmode = \"sideways\"\n"), ParseError);
  CHECK_THROWS_AS(parse_config_text("[mesh]\nelements = [4.5]\n"), ParseError);
  CHECK_THROWS_AS(parse_config_text("[problem]\nseed = -4\n"), ParseError);
  CHECK_THROWS_AS(parse_config_text("[domain]\nlo = [0.0, 0.0]\n"), ParseError);
  CHECK_THROWS_AS(parse_config_text("[mesh]\nelements = [4,]\n"), ParseError);
}

TEST_CASE("physical and control invariants are validated") {
  CHECK_THROWS_AS(parse_config_text("[problem]\ndimension = 3\n"), ValidationError);
  CHECK_THROWS_AS(parse_config_text("[domain]\nhi = [0.0]\n"), ValidationError);
  CHECK_THROWS_AS(
      parse_config_text("[problem]\nmode = \"dynamic\"\n[time]\ndt = 0.0\n"),
      ValidationError);
  CHECK_THROWS_AS(
      parse_config_text("[problem]\nmode = \"dispersion\"\ndimension = 2\n"),
      ValidationError);
  CHECK_THROWS_AS(parse_config_text("[loads]\nexchange_faces = [1]\n"), ValidationError);
  CHECK_THROWS_AS(parse_config_text("[static]\ndirichlet_faces = [2]\n"),
                  ValidationError);
  CHECK_THROWS_AS(parse_config_text("[time]\nscheme = \"leapfrog\"\n"), ValidationError);
  CHECK_THROWS_AS(parse_config_text("[material]\nmobility = -1.0\n"), ValidationError);

  // A static-mode config needs no [time] section at all.
  CHECK_NOTHROW(parse_config_text("[problem]\nmode = \"static\"\n"));
}

TEST_CASE("every accepted config round-trips through echo and reparse") {
  const std::string maximal = R"(
[problem]
mode = "dynamic"
dimension = 2
seed = 42

[domain]
lo = [0.0, -0.5]
hi = [2.0, 0.5]

[mesh]
elements = [6, 4]
degree = 3
quadrature = 5

[material]
shear_modulus = 1.25
volumetric_modulus = 0.75
barrier_coefficient = 0.002
barrier_exponent = 7.0
coupling = 0.15
chemical_stiffness = 1.1
equilibrium_concentration = 0.6
capillarity = 0.03
hypergradient_scale = 0.0002
static_exponent = 4.5
density = 1.2
permeability = 0.5
mobility = 0.9

[time]
T = 0.02
dt = 0.0005
scheme = "midpoint"

[loads]
body_force_profile = "sine"
body_force = [0.1, -0.05]
traction_faces = [3]
traction = [0.0, 0.02]
exchange_faces = [0, 1]
mu_external = 0.4
mu_external_late = 0.1
mu_switch_time = 0.01

[initial]
concentration = 0.6
perturbation_amplitude = 0.08
perturbation_mode = 2
bump_amplitude = 0.01
bump_mode = 1
velocity_profile = "sine"
velocity_amplitude = 0.05
velocity_mode = 2

[static]
content = 1.3
g_tol = 1e-07
max_iter = 5000
det_floor = 0.002
dirichlet_faces = [0, 1]
dirichlet_stretch = 1.1
cn_samples = 20000

[allen_cahn]
relaxation_time = 0.5

[dispersion]
modes = [2, 3, 4]
amplitude = 2e-05
steps_per_period = 96
periods = 6.0

[tolerances]
newton = 1e-11
max_newton = 30
max_halvings = 6

[output]
directory = "runs/demo"
snapshot_stride = 5
samples_per_element = 3
)";
  const ProblemConfig a = parse_config_text(maximal);
  const std::string echo = emit_config(a);
  const ProblemConfig b = parse_config_text(echo);
  CHECK(emit_config(b) == echo);

  CHECK(b.mode == RunMode::dynamic);
  CHECK(b.seed == 42);
  CHECK(b.lo[1] == -0.5);
  CHECK(b.quadrature == 5);
  CHECK(b.material.permeability == 0.5);
  CHECK(b.scheme == "midpoint");
  CHECK(b.mu_switch_time == 0.01);
  CHECK(b.traction[1] == 0.02);
  CHECK(b.velocity_profile == "sine");
  CHECK(b.content == 1.3);
  CHECK(b.dirichlet_stretch == 1.1);
  CHECK(b.modes == std::vector<int>{2, 3, 4});
  CHECK(b.out_dir == "runs/demo");

  // The same property for a config that relies almost entirely on defaults,
  // including an anisotropic mobility.
  const std::string small = R"(
[problem]
mode = "static"
dimension = 2

[mesh]
elements = [3, 3]

[material]
mobility_matrix = [2.0, 0.3, 0.3, 1.0]
)";
  const ProblemConfig s1 = parse_config_text(small);
  const std::string e1 = emit_config(s1);
  const ProblemConfig s2 = parse_config_text(e1);
  CHECK(emit_config(s2) == e1);
  REQUIRE(s2.material.mobility_matrix.has_value());
  CHECK((*s2.material.mobility_matrix)[1] == 0.3);
}

TEST_CASE("comments, whitespace, and derived content behave as documented") {
  const std::string text = R"(
# leading comment
[problem]
mode = "static"   # trailing comment
dimension = 1

[domain]
lo = [0.5]
hi = [2.5]

[initial]
concentration = 0.4
)";
  const ProblemConfig c = parse_config_text(text);
  CHECK(c.mode == RunMode::statics);
  CHECK(c.volume() == 2.0);
  CHECK(c.total_content() == Catch::Approx(0.8).epsilon(1e-15));

  const std::string with_content = text + "\n[static]\ncontent = 0.55\n";
  CHECK(parse_config_text(with_content).total_content() == 0.55);
}
