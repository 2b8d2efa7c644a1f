int pick_branch(int a, int b, unsigned int flags)
{
    int r;
    if (flags & 4)
        r = a - b;
    else
        r = b;
    return r;
}
