// Solve the reduced 3D problem of one random vascular graph with each
// classical preconditioner and print iteration counts.
//
//   compare_preconditioners [n] [graph-seed]

#include <cstdio>
#include <cstdlib>

#include "mdp/harness.hpp"

using namespace mdp;

int main(int argc, char** argv)
{
    const int n = argc > 1 ? std::atoi(argv[1]) : 13;
    const std::uint64_t seed = argc > 2 ? std::strtoull(argv[2], nullptr, 10) : 900000;

    const Graph1D g = generate_graph(GraphFamily::with_branches(1, 30), seed);
    const ReducedCase c = make_reduced_case(g, n, PhysicalParams{}, 1e-4, detail::graph_id(seed));
    std::printf("graph %s: %zu vertices, %zu edges, N_h = %d\n", c.id.c_str(), g.vertices.size(), g.edges.size(),
                c.C.rows);

    std::vector<PrecondSpec> specs(4);
    specs[1].kind = PrecondKind::ilu0;
    specs[2].kind = PrecondKind::gmg;
    specs[2].gmg_cycles = 1;
    specs[3].kind = PrecondKind::gmg;
    const FgmresOptions opt{20, 1e-6, 1000};
    for (const PrecondSpec& s : specs) {
        const RunRow r = solve_reduced_case(c, s, opt, nullptr, 1);
        std::printf("  %-10s %4d iterations  residual %.2e  %.1f ms\n", s.label().c_str(), r.iterations,
                    r.rel_residual, r.time_ms);
    }
    return 0;
}
