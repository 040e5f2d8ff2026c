#pragma once

#include "carpetmf/error.hpp"
#include "carpetmf/io.hpp"
#include "carpetmf/logsum.hpp"
#include "carpetmf/parallel.hpp"
#include "carpetmf/symbolic.hpp"
#include "carpetmf/weights.hpp"
#include "carpetmf/pressure.hpp"
#include "carpetmf/gibbs.hpp"
#include "carpetmf/spectra.hpp"
#include "carpetmf/carpet.hpp"
#include "carpetmf/config.hpp"
#include "carpetmf/pipeline.hpp"
#include "carpetmf/verification.hpp"
