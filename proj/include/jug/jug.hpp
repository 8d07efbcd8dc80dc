#pragma once

#include "adam.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "data.hpp"
#include "draws.hpp"
#include "latent.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "mr.hpp"
#include "objectives.hpp"
#include "param_store.hpp"
#include "rng.hpp"
#include "seq.hpp"
#include "tape.hpp"
#include "tensor.hpp"
#include "toy.hpp"
#include "trainer.hpp"
#include "vocab.hpp"
