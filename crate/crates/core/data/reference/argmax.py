@triton.jit
def kernel(input_ptr, output_ptr, n_rows, n_cols):
    row = tl.program_id(0)
    if row >= n_rows:
        return
    base = row * n_cols
    best_val = tl.load(input_ptr + base)
    best_idx = 0
    for j in range(1, n_cols):
        val = tl.load(input_ptr + base + j)
        if val > best_val:
            best_val = val
            best_idx = j
    tl.store(output_ptr + row, best_idx)

def wrapper(input, dim=None, keepdim=False):
    if input.numel() == 0:
        raise RuntimeError("argmax(): Expected reduction dim to be specified for input.numel() == 0.")
    if dim is None:
        rows = input.contiguous().view(1, -1)
        result_shape = (1,) * input.dim() if keepdim else ()
    else:
        ndim = max(input.dim(), 1)
        if dim < -ndim or dim >= ndim:
            raise IndexError("Dimension out of range")
        dim = dim % ndim
        if input.dim() == 0:
            rows = input.contiguous().view(1, 1)
            result_shape = ()
        else:
            moved = input.movedim(dim, -1).contiguous()
            rows = moved.view(-1, input.shape[dim])
            shape = list(input.shape)
            if keepdim:
                shape[dim] = 1
            else:
                shape.pop(dim)
            result_shape = tuple(shape)
    n_rows = rows.shape[0]
    n_cols = rows.shape[1]
    output = torch.empty(n_rows, dtype=torch.int64, device=input.device)
    kernel[(n_rows,)](rows, output, n_rows, n_cols)
    return output.view(result_shape)
