#pragma once

#include "corrmem/adversarial.hpp"
#include "corrmem/binomial.hpp"
#include "corrmem/bounds.hpp"
#include "corrmem/code_memory.hpp"
#include "corrmem/csv.hpp"
#include "corrmem/errors.hpp"
#include "corrmem/field_model.hpp"
#include "corrmem/hidden_channel.hpp"
#include "corrmem/parallel.hpp"
#include "corrmem/rng.hpp"
#include "corrmem/stats.hpp"
