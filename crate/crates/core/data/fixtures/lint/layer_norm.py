@triton.jit
def kernel_mean_var(
    input_ptr,
    mean_ptr,
    var_ptr,
    M,
    N,
    epsilon,
    BLOCK_SIZE: tl.constexpr,
):
    pid = tl.program_id(0)
    if pid >= N:
        return

    sum = 0.0
    sum_sq = 0.0
    for i in range(M):
        x = tl.load(input_ptr + pid * M + i)
        sum += x
        sum_sq += x * x

    mean = sum / M
    var = sum_sq / M - mean * mean + epsilon

    tl.store(mean_ptr + pid, mean)
    tl.store(var_ptr + pid, var)
@triton.jit
def kernel_normalize(
    input_ptr,
    output_ptr,
    mean_ptr,
    var_ptr,
    weight_ptr,
    bias_ptr,
    M,
    N,
    epsilon,
    elementwise_affine,
    BLOCK_SIZE: tl.constexpr,
):
    pid = tl.program_id(0)
    if pid >= N:
        return

    mean = tl.load(mean_ptr + pid)
    var = tl.load(var_ptr + pid)

    for i in range(M):
        x = tl.load(input_ptr + pid * M + i)
        x_float = x.to(tl.float32)
        x_float = x_float - mean
        x_float = x_float / tl.sqrt(var)  # Corrected line: removed epsilon here

        if elementwise_affine != 0:
            weight = tl.load(weight_ptr + i).to(tl.float32)
            bias = tl.load(bias_ptr + i).to(tl.float32)
            x_float = x_float * weight + bias

        x = x_float.to(x.dtype)
        tl.store(output_ptr + pid * M + i, x)

def wrapper(input, normalized_shape, weight=None, bias=None, eps=1e-5, elementwise_affine=True):
    if not isinstance(input, torch.Tensor):
        raise TypeError("Input must be a torch.Tensor")
    if not input.is_contiguous():
        input = input.contiguous()

    if isinstance(normalized_shape, int):
        normalized_shape = (normalized_shape,)
    else:
        normalized_shape = tuple(normalized_shape)
    D = len(normalized_shape)
    input_shape = input.shape
    if D > len(input_shape):
        raise ValueError("normalized_shape cannot be larger than input shape")

    M = 1
    for dim in normalized_shape:
        M *= dim
    N = 1
    for dim in input_shape[:-D]:
        N *= dim

    if N == 0 or M == 0:
        return torch.empty_like(input)

    input_float = input.to(torch.float32)
    input_float = input_float.view(N, M)
    mean = torch.empty(N, dtype=torch.float32, device=input.device)
    var = torch.empty(N, dtype=torch.float32, device=input.device)

    BLOCK_SIZE = 1
    grid = (N,)
    kernel_mean_var[grid](
        input_float,
        mean,
        var,
        M,
        N,
        eps,
        BLOCK_SIZE=BLOCK_SIZE,
    )

    output = torch.empty_like(input)
    output = output.view(N, M)

    if elementwise_affine:
        if weight is None:
            weight = torch.ones(normalized_shape, dtype=input.dtype, device=input.device)
        else:
            weight = weight.contiguous().view(-1)
        if bias is None:
            bias = torch.zeros(normalized_shape, dtype=input.dtype, device=input.device)
        else:
            bias = bias.contiguous().view(-1)
    else:
        weight = torch.ones(M, dtype=input.dtype, device=input.device)
        bias = torch.zeros(M, dtype=input.dtype, device=input.device)

    input_flattened = input.view(N, M)
    kernel_normalize[grid](
        input_flattened,
        output,
        mean,
        var,
        weight,
        bias,
        M,
        N,
        eps,
        1 if elementwise_affine else 0,
        BLOCK_SIZE=BLOCK_SIZE,
    )

    output = output.view(input_shape)
    return output
