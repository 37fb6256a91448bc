#pragma once

#include <cstddef>
#include <cstdint>

// Acceptance thresholds shared by the CLI and the test suites. Bump
// kThresholdsVersion whenever a value changes.
namespace hoft::thresholds {

inline constexpr int kThresholdsVersion = 1;

// CWY construction
inline constexpr double kExactOrthogonality = 1e-12;
inline constexpr double kRankOneError = 1e-12;
inline constexpr double kNeumannComplete = 1e-10;
inline constexpr double kTwoTermLowRank = 1e-12;
// Allowed dip when checking "nondecreasing in rank": rank-1 and rank-2 errors
// are both at the rounding floor (~1e-17) and may swap order.
inline constexpr double kMonotoneSlack = 1e-12;
// Two-term orthogonality error, gaussian U of 1024×8 from seed 1024. Frozen.
inline constexpr std::uint64_t kApproxBaselineSeed = 1024;
inline constexpr double kApproxBaseline1024r8 = 2.1000e-3;
inline constexpr double kBaselineTolerance = 0.10;

// Adapter properties
inline constexpr double kIdentityInit = 1e-11;
inline constexpr double kWeightDecay = 1e-12;
inline constexpr double kSpectrumRelative = 1e-8;
inline constexpr double kFrobeniusRelative = 1e-10;

// Procrustes audit
inline constexpr double kOneSidedGap = 1e-10;
inline constexpr double kPolarOrthogonality = 1e-10;

// Gradients
inline constexpr double kGradRelative = 1e-5;
inline constexpr double kLoraGradRelative = 1e-7;
inline constexpr double kRadialCosine = 1e-6;
// At an exact fit the analytic gradient is 0; FD only sees O(h²) curvature.
inline constexpr double kZeroResidualFd = 1e-8;

// Hyperspherical energy
inline constexpr double kEnergyLowRankRelative = 1e-3;
inline constexpr double kEnergyLeftOnlyRelative = 1e-8;

// Toy training
inline constexpr double kTrainFinalLoss = 1e-4;
inline constexpr double kWitnessLoss = 1e-10;
inline constexpr std::uint64_t kTrainSeed = 1;
inline constexpr std::size_t kTrainSteps = 5000;
inline constexpr double kTrainLr = 1e-2;
inline constexpr std::size_t kTrainBatch = 32;
inline constexpr std::size_t kSmoothingWindow = 100;

// NF4: RMS(dequant − W)/RMS(W) for a seeded 256×256 standard gaussian, block 64,
// measured once and frozen.
inline constexpr std::uint64_t kNf4RmsSeed = 7;
inline constexpr double kNf4RelativeRms = 0.0921;
inline constexpr double kNf4RmsBand = 0.20;
inline constexpr double kQuantLossRatio = 10.0;
inline constexpr double kQuantTaskNoise = 0.1;

// Bench
inline constexpr double kBenchMinSpeedup = 1.0;

}  // namespace hoft::thresholds
