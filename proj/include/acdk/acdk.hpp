#pragma once

#include "acdk/config.hpp"
#include "acdk/corruption.hpp"
#include "acdk/datagen.hpp"
#include "acdk/evalsuite.hpp"
#include "acdk/gradcheck.hpp"
#include "acdk/image.hpp"
#include "acdk/io.hpp"
#include "acdk/losses.hpp"
#include "acdk/model.hpp"
#include "acdk/optimizer.hpp"
#include "acdk/parallel.hpp"
#include "acdk/plasma.hpp"
#include "acdk/rng.hpp"
#include "acdk/sdr.hpp"
#include "acdk/trainer.hpp"
