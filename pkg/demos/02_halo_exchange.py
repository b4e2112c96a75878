# # Splitting the box across ranks
#
# Each simulated rank owns an equal block of the global grid and needs a
# one-cell copy of its neighbours' faces before every step. Ranks here are
# threads that talk through bounded in-process channels.

import threading

import numpy as np

from grayscott import Field, InProcessHub, decompose, exchange
from grayscott.decomp import send_view

# The process grid is the most cubic factorisation of the rank count that
# divides the domain; ties go to splitting z first, then y.

for n, dims in [(8, (64, 64, 64)), (4, (64, 64, 32)), (6, (12, 12, 12))]:
    print(n, dims, "->", decompose(n, dims)[0].proc_dims)

# ## Strided faces
#
# A face is not contiguous in memory. For an x-y face of a 2^3 block the
# view is 4 runs of 2 values with a stride of 4 (ghost rows included), the
# same shape as an MPI vector type.

print(send_view((2, 2, 2), "+z"))

# ## One exchange
#
# Fill a random 16^3 field, cut it into 2x2x2 blocks, and let every rank
# exchange in its own thread. Afterwards each ghost face holds exactly the
# neighbouring plane of the global array, with periodic wrap.

rng = np.random.default_rng(0)
g = np.asfortranarray(rng.random((16, 16, 16)))
topos = decompose(8, g.shape)
hub = InProcessHub(len(topos))
fields = []
for t in topos:
    f = Field(t.block_dims)
    f.interior[...] = g[tuple(slice(o, o + n) for o, n in zip(t.block_offset, t.block_dims))]
    fields.append(f)

threads = [threading.Thread(target=exchange, args=(fields[t.rank], t, hub.endpoint(t.rank)))
           for t in topos]
for th in threads:
    th.start()
for th in threads:
    th.join()

ghost = fields[0].data[0, 1:-1, 1:-1]              # -x ghost of rank 0
wrapped = g[-1, :8, :8]                            # last x plane of the global box
print("rank 0 -x ghost matches wrapped plane:", np.array_equal(ghost, wrapped))
