#pragma once

// Upper 5% points of the studentized range, frozen from
// scipy.stats.studentized_range.ppf(0.95, k, df).

#include <array>
#include <limits>

namespace oracle {

inline constexpr std::array<double, 6> kQTableDf = {10, 20, 30, 60, 120,
                                                    std::numeric_limits<double>::infinity()};

// k = 2..10 rows
inline constexpr double kQTable[9][6] = {
    {3.1510641833, 2.9499977977, 2.8882094058, 2.8288483087, 2.8000444314, 2.7718076487},
    {3.8767767500, 3.5779347252, 3.4864200647, 3.3986612407, 3.3561383962, 3.3144931554},
    {4.3265821157, 3.9582935609, 3.8454013530, 3.7370892256, 3.6845885423, 3.6331595749},
    {4.6542929979, 4.2318567490, 4.1020790195, 3.9774182216, 3.9169376908, 3.8576555104},
    {4.9120157493, 4.4452366637, 4.3014638439, 4.1631608138, 4.0959859855, 4.0300920532},
    {5.1241660953, 4.6199081213, 4.4641771028, 4.3141428137, 4.2411821923, 4.1695541550},
    {5.3042381104, 4.7675842302, 4.6014148565, 4.4410790786, 4.3630134162, 4.2863094093},
    {5.4604987403, 4.8953654212, 4.7199379421, 4.5504144236, 4.4677749759, 4.3865091155},
    {5.5983864665, 5.0078826676, 4.8241412862, 4.6463239633, 4.5595379941, 4.4741242217},
};

// q(3, 12), the df of three 5-sample groups.
inline constexpr double kQ3_12 = 3.772928965727;

}  // namespace oracle
